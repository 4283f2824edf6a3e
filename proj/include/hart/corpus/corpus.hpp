#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hart::corpus {

struct Message {
    std::int64_t timestamp = 0;
    std::string text;
    friend bool operator==(const Message&, const Message&) = default;
};

struct UserRecord {
    std::string user_id;
    std::vector<Message> messages;  // ascending timestamp, ties in input order
    friend bool operator==(const UserRecord&, const UserRecord&) = default;
};

class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t line)
        : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

// Users in first-appearance order, each with a time-ordered message stream.
class UserCorpus {
public:
    const std::vector<UserRecord>& users() const { return users_; }
    std::size_t num_users() const { return users_.size(); }
    std::size_t num_messages() const;
    bool empty() const { return users_.empty(); }

    const UserRecord* find(std::string_view user_id) const;

    // Appends a whole user; throws on duplicate id. Messages are sorted.
    void add_user(UserRecord user);
    // Appends one message, creating the user if needed. Call normalize()
    // afterwards to restore ordering.
    void add_message(std::string_view user_id, Message msg);
    // Stable-sorts every user's messages by timestamp.
    void normalize();

    friend bool operator==(const UserCorpus&, const UserCorpus&) = default;

private:
    std::vector<UserRecord> users_;
};

struct LoadStats {
    std::size_t lines = 0;
    std::size_t users = 0;
    std::size_t messages = 0;
    std::vector<std::string> warnings;
};

// Text escaping for the TSV corpus format: backslash, newline and tab.
std::string escape_text(std::string_view text);
std::string unescape_text(std::string_view text);

UserCorpus parse_corpus(std::string_view content, LoadStats* stats = nullptr);
UserCorpus load_corpus(const std::filesystem::path& path, LoadStats* stats = nullptr);
std::string serialize_corpus(const UserCorpus& corpus);
void save_corpus(const UserCorpus& corpus, const std::filesystem::path& path);

// Drops users below either threshold (words counted by whitespace tokens).
UserCorpus filter_users(const UserCorpus& corpus, std::size_t min_messages,
                        std::size_t min_words);

}  // namespace hart::corpus
