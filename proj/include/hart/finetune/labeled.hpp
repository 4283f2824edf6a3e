#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "hart/corpus/corpus.hpp"

namespace hart::finetune {

// One line of a labeled data file:
//   user_id <TAB> timestamp <TAB> split <TAB> label <TAB> text
// split is train, dev or test; text uses the corpus escaping.
struct LabeledLine {
    std::string user_id;
    std::int64_t timestamp = 0;
    std::string split;
    std::string label;
    std::string text;
    friend bool operator==(const LabeledLine&, const LabeledLine&) = default;
};

std::vector<LabeledLine> parse_labeled(std::string_view content);
std::vector<LabeledLine> load_labeled(const std::filesystem::path& path);
std::string serialize_labeled(const std::vector<LabeledLine>& lines);
void save_labeled(const std::vector<LabeledLine>& lines, const std::filesystem::path& path);

struct LabeledDocument {
    std::string user_id;
    std::vector<corpus::Message> history;  // strictly earlier than `message`
    corpus::Message message;
    int label = 0;
    std::string split;
};

struct LabeledDocumentSet {
    std::vector<LabeledDocument> records;
    std::vector<std::string> class_names;  // label id -> name
    std::size_t num_classes() const { return class_names.size(); }
    // Throws if a history message is not strictly earlier than its document.
    void validate() const;
    LabeledDocumentSet subset(std::string_view split) const;
};

// History of each document = the user's corpus messages posted before it.
// Class ids follow the sorted order of distinct label strings.
LabeledDocumentSet make_document_set(const std::vector<LabeledLine>& lines,
                                     const corpus::UserCorpus& history);

struct LabeledUser {
    std::string user_id;
    std::vector<corpus::Message> messages;
    double target = 0.0;
    std::string split;
};

struct LabeledUserSet {
    std::vector<LabeledUser> records;
    LabeledUserSet subset(std::string_view split) const;
};

// One line per user; the label column is the numeric target and the text
// column is ignored. Messages come from the corpus.
LabeledUserSet make_user_set(const std::vector<LabeledLine>& lines,
                             const corpus::UserCorpus& corpus);

}  // namespace hart::finetune
