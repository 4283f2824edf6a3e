#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hart::corpus {

class UserCorpus;

std::vector<std::string_view> whitespace_tokenize(std::string_view text);

// Word-level vocabulary. Ids 0..2 are reserved for PAD, INSEP and UNK in that
// order; the file format is one token per line with line number = id.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kInsep = 1;
    static constexpr int kUnk = 2;
    static constexpr std::string_view kPadToken = "<|pad|>";
    static constexpr std::string_view kInsepToken = "<|insep|>";
    static constexpr std::string_view kUnkToken = "<|unk|>";

    Vocabulary();
    explicit Vocabulary(std::vector<std::string> tokens);

    // Corpus words ordered by descending count, ties lexicographic.
    static Vocabulary build(const UserCorpus& corpus, std::size_t min_count = 1);

    std::size_t size() const { return tokens_.size(); }
    int id(std::string_view token) const;  // kUnk when absent
    bool contains(std::string_view token) const;
    const std::string& token(int id) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    std::vector<int> encode(std::string_view text) const;
    std::string decode(const std::vector<int>& ids) const;

    std::string serialize() const;
    static Vocabulary parse(std::string_view content);
    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.tokens_ == b.tokens_;
    }

private:
    void index();
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
};

}  // namespace hart::corpus
