#include "hart/finetune/labeled.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "hart/util/text.hpp"

namespace hart::finetune {

std::vector<LabeledLine> parse_labeled(std::string_view content) {
    std::vector<LabeledLine> out;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        auto nl = content.find('\n', pos);
        if (nl == std::string_view::npos) nl = content.size();
        std::string_view line = content.substr(pos, nl - pos);
        pos = nl + 1;
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty() || line.front() == '#') continue;
        const auto fields = util::split(line, '\t');
        if (fields.size() != 5) {
            throw corpus::FormatError("expected 5 tab-separated fields, got " +
                                          std::to_string(fields.size()),
                                      lineno);
        }
        LabeledLine l;
        l.user_id = std::string(fields[0]);
        if (l.user_id.empty()) throw corpus::FormatError("empty user_id", lineno);
        try {
            l.timestamp = util::parse_int(fields[1], "timestamp");
        } catch (const std::exception& e) {
            throw corpus::FormatError(e.what(), lineno);
        }
        l.split = std::string(fields[2]);
        if (l.split != "train" && l.split != "dev" && l.split != "test") {
            throw corpus::FormatError("split must be train, dev or test, got '" + l.split + "'",
                                      lineno);
        }
        l.label = std::string(fields[3]);
        l.text = corpus::unescape_text(fields[4]);
        out.push_back(std::move(l));
    }
    return out;
}

std::vector<LabeledLine> load_labeled(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open labeled file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_labeled(ss.str());
}

std::string serialize_labeled(const std::vector<LabeledLine>& lines) {
    std::string out;
    for (const auto& l : lines) {
        out += l.user_id + '\t' + std::to_string(l.timestamp) + '\t' + l.split + '\t' + l.label +
               '\t' + corpus::escape_text(l.text) + '\n';
    }
    return out;
}

void save_labeled(const std::vector<LabeledLine>& lines, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write labeled file " + path.string());
    out << serialize_labeled(lines);
}

void LabeledDocumentSet::validate() const {
    for (const auto& r : records) {
        for (const auto& h : r.history) {
            if (h.timestamp >= r.message.timestamp) {
                throw std::invalid_argument("document of user " + r.user_id +
                                            ": history message is not earlier than the labeled one");
            }
        }
        if (r.label < 0 || static_cast<std::size_t>(r.label) >= class_names.size()) {
            throw std::invalid_argument("document of user " + r.user_id + ": label out of range");
        }
    }
}

LabeledDocumentSet LabeledDocumentSet::subset(std::string_view split) const {
    LabeledDocumentSet out;
    out.class_names = class_names;
    for (const auto& r : records) {
        if (r.split == split) out.records.push_back(r);
    }
    return out;
}

LabeledDocumentSet make_document_set(const std::vector<LabeledLine>& lines,
                                     const corpus::UserCorpus& history) {
    std::set<std::string> names;
    for (const auto& l : lines) names.insert(l.label);
    LabeledDocumentSet out;
    out.class_names.assign(names.begin(), names.end());
    std::map<std::string, int> ids;
    for (std::size_t i = 0; i < out.class_names.size(); ++i) {
        ids[out.class_names[i]] = static_cast<int>(i);
    }
    for (const auto& l : lines) {
        LabeledDocument d;
        d.user_id = l.user_id;
        d.message = corpus::Message{l.timestamp, l.text};
        d.label = ids.at(l.label);
        d.split = l.split;
        if (const auto* u = history.find(l.user_id)) {
            for (const auto& m : u->messages) {
                if (m.timestamp < l.timestamp) d.history.push_back(m);
            }
        }
        out.records.push_back(std::move(d));
    }
    out.validate();
    return out;
}

LabeledUserSet LabeledUserSet::subset(std::string_view split) const {
    LabeledUserSet out;
    for (const auto& r : records) {
        if (r.split == split) out.records.push_back(r);
    }
    return out;
}

LabeledUserSet make_user_set(const std::vector<LabeledLine>& lines,
                             const corpus::UserCorpus& corpus) {
    LabeledUserSet out;
    std::set<std::string> seen;
    for (const auto& l : lines) {
        if (!seen.insert(l.user_id).second) {
            throw std::invalid_argument("user " + l.user_id + " has more than one target");
        }
        const auto* u = corpus.find(l.user_id);
        if (!u || u->messages.empty()) {
            throw std::invalid_argument("user " + l.user_id + " has no messages in the corpus");
        }
        LabeledUser r;
        r.user_id = l.user_id;
        r.messages = u->messages;
        r.target = util::parse_double(l.label, "label");
        r.split = l.split;
        out.records.push_back(std::move(r));
    }
    return out;
}

}  // namespace hart::finetune
