#include "hart/corpus/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "hart/corpus/vocabulary.hpp"

namespace hart::corpus {

std::size_t UserCorpus::num_messages() const {
    std::size_t n = 0;
    for (const auto& u : users_) n += u.messages.size();
    return n;
}

const UserRecord* UserCorpus::find(std::string_view user_id) const {
    for (const auto& u : users_) {
        if (u.user_id == user_id) return &u;
    }
    return nullptr;
}

void UserCorpus::add_user(UserRecord user) {
    if (find(user.user_id)) {
        throw std::invalid_argument("duplicate user id: " + user.user_id);
    }
    std::stable_sort(user.messages.begin(), user.messages.end(),
                     [](const Message& a, const Message& b) { return a.timestamp < b.timestamp; });
    users_.push_back(std::move(user));
}

void UserCorpus::add_message(std::string_view user_id, Message msg) {
    if (users_.empty() || users_.back().user_id != user_id) {
        auto it = std::find_if(users_.begin(), users_.end(),
                               [&](const UserRecord& u) { return u.user_id == user_id; });
        if (it == users_.end()) {
            users_.push_back(UserRecord{std::string(user_id), {}});
        } else {
            it->messages.push_back(std::move(msg));
            return;
        }
    }
    users_.back().messages.push_back(std::move(msg));
}

void UserCorpus::normalize() {
    for (auto& u : users_) {
        std::stable_sort(u.messages.begin(), u.messages.end(),
                         [](const Message& a, const Message& b) { return a.timestamp < b.timestamp; });
    }
}

std::string escape_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (char c : text) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            case '\r': out += "\\r"; break;
            default: out += c;
        }
    }
    return out;
}

std::string unescape_text(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '\\' || i + 1 == text.size()) {
            out += text[i];
            continue;
        }
        switch (text[++i]) {
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            case 'r': out += '\r'; break;
            case '\\': out += '\\'; break;
            default:
                out += '\\';
                out += text[i];
        }
    }
    return out;
}

UserCorpus parse_corpus(std::string_view content, LoadStats* stats) {
    UserCorpus corpus;
    LoadStats local;
    LoadStats& st = stats ? *stats : local;
    st = LoadStats{};

    std::vector<std::string> closed;  // users whose contiguous run has ended
    std::string current;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        if (eol == std::string_view::npos) eol = content.size();
        std::string_view line = content.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;

        const std::size_t t1 = line.find('\t');
        const std::size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
        if (t2 == std::string_view::npos) {
            throw FormatError("expected user_id<TAB>timestamp<TAB>text", line_no);
        }
        const std::string_view uid = line.substr(0, t1);
        const std::string_view ts = line.substr(t1 + 1, t2 - t1 - 1);
        if (uid.empty()) throw FormatError("empty user_id", line_no);
        std::int64_t timestamp = 0;
        const auto [ptr, ec] = std::from_chars(ts.data(), ts.data() + ts.size(), timestamp);
        if (ec != std::errc{} || ptr != ts.data() + ts.size()) {
            throw FormatError("invalid timestamp '" + std::string(ts) + "'", line_no);
        }

        if (uid != current) {
            if (std::find(closed.begin(), closed.end(), uid) != closed.end()) {
                st.warnings.push_back("user '" + std::string(uid) +
                                      "' appears in more than one block; merged (line " +
                                      std::to_string(line_no) + ")");
            }
            if (!current.empty()) closed.push_back(current);
            current = std::string(uid);
        }
        corpus.add_message(uid, Message{timestamp, unescape_text(line.substr(t2 + 1))});
        ++st.messages;
    }
    corpus.normalize();
    st.lines = line_no;
    st.users = corpus.num_users();
    return corpus;
}

UserCorpus load_corpus(const std::filesystem::path& path, LoadStats* stats) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_corpus(ss.str(), stats);
}

std::string serialize_corpus(const UserCorpus& corpus) {
    std::string out;
    for (const auto& u : corpus.users()) {
        for (const auto& m : u.messages) {
            out += u.user_id;
            out += '\t';
            out += std::to_string(m.timestamp);
            out += '\t';
            out += escape_text(m.text);
            out += '\n';
        }
    }
    return out;
}

void save_corpus(const UserCorpus& corpus, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write corpus file " + path.string());
    out << serialize_corpus(corpus);
}

UserCorpus filter_users(const UserCorpus& corpus, std::size_t min_messages,
                        std::size_t min_words) {
    UserCorpus out;
    for (const auto& u : corpus.users()) {
        std::size_t words = 0;
        for (const auto& m : u.messages) words += whitespace_tokenize(m.text).size();
        if (u.messages.size() >= min_messages && words >= min_words) out.add_user(u);
    }
    return out;
}

}  // namespace hart::corpus
