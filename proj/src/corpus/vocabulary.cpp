#include "hart/corpus/vocabulary.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "hart/corpus/corpus.hpp"

namespace hart::corpus {

std::vector<std::string_view> whitespace_tokenize(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    auto is_space = [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    };
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        const std::size_t start = i;
        while (i < text.size() && !is_space(text[i])) ++i;
        if (i > start) out.push_back(text.substr(start, i - start));
    }
    return out;
}

Vocabulary::Vocabulary()
    : tokens_{std::string(kPadToken), std::string(kInsepToken), std::string(kUnkToken)} {
    index();
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    if (tokens_.size() < 3 || tokens_[kPad] != kPadToken || tokens_[kInsep] != kInsepToken ||
        tokens_[kUnk] != kUnkToken) {
        throw std::invalid_argument("vocabulary must start with " + std::string(kPadToken) +
                                    ", " + std::string(kInsepToken) + ", " +
                                    std::string(kUnkToken));
    }
    index();
}

void Vocabulary::index() {
    ids_.clear();
    for (std::size_t i = 0; i < tokens_.size(); ++i) {
        if (tokens_[i].empty()) {
            throw std::invalid_argument("vocabulary token " + std::to_string(i) + " is empty");
        }
        if (!ids_.emplace(tokens_[i], static_cast<int>(i)).second) {
            throw std::invalid_argument("duplicate vocabulary token '" + tokens_[i] + "'");
        }
    }
}

Vocabulary Vocabulary::build(const UserCorpus& corpus, std::size_t min_count) {
    std::map<std::string, std::size_t, std::less<>> counts;
    for (const auto& u : corpus.users()) {
        for (const auto& m : u.messages) {
            for (auto w : whitespace_tokenize(m.text)) {
                auto it = counts.find(w);
                if (it == counts.end()) {
                    counts.emplace(std::string(w), 1);
                } else {
                    ++it->second;
                }
            }
        }
    }
    std::vector<std::pair<std::string, std::size_t>> words;
    for (auto& [w, c] : counts) {
        if (c >= min_count && w != kPadToken && w != kInsepToken && w != kUnkToken) {
            words.emplace_back(w, c);
        }
    }
    std::stable_sort(words.begin(), words.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (auto& [w, c] : words) v.tokens_.push_back(std::move(w));
    v.index();
    return v;
}

int Vocabulary::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
    return ids_.count(std::string(token)) != 0;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
        throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    }
    return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
    std::vector<int> out;
    for (auto w : whitespace_tokenize(text)) out.push_back(id(w));
    return out;
}

std::string Vocabulary::decode(const std::vector<int>& ids) const {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ' ';
        out += token(ids[i]);
    }
    return out;
}

std::string Vocabulary::serialize() const {
    std::string out;
    for (const auto& t : tokens_) {
        out += t;
        out += '\n';
    }
    return out;
}

Vocabulary Vocabulary::parse(std::string_view content) {
    std::vector<std::string> tokens;
    std::size_t pos = 0;
    while (pos < content.size()) {
        std::size_t eol = content.find('\n', pos);
        if (eol == std::string_view::npos) eol = content.size();
        std::string_view line = content.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        tokens.emplace_back(line);
        pos = eol + 1;
    }
    return Vocabulary(std::move(tokens));
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write vocabulary file " + path.string());
    out << serialize();
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open vocabulary file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

}  // namespace hart::corpus
