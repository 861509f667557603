#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace plad::lm {

using Tokens = std::vector<int>;

// Atomic-symbol vocabulary. Ordinary symbols take ids 0..k-1 in the order
// given; <pad>, <bos> and <eos> are appended after them.
class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> symbols);

    // Rebuilds from a full token list (as stored in checkpoints).
    static Vocabulary from_tokens(std::vector<std::string> tokens, int pad, int bos, int eos);

    int size() const noexcept { return static_cast<int>(tokens_.size()); }
    int pad() const noexcept { return pad_; }
    int bos() const noexcept { return bos_; }
    int eos() const noexcept { return eos_; }
    bool is_special(int id) const noexcept { return id == pad_ || id == bos_ || id == eos_; }

    const std::string& token(int id) const;
    int id(std::string_view token) const;
    bool contains(std::string_view token) const;
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }

    // Whitespace-separated symbols -> ids. Throws on unknown symbols.
    Tokens encode(std::string_view text) const;
    // Ids -> whitespace-separated symbols; stops at the first <eos>.
    std::string decode(const Tokens& ids) const;

    bool operator==(const Vocabulary& other) const {
        return tokens_ == other.tokens_ && pad_ == other.pad_ && bos_ == other.bos_ && eos_ == other.eos_;
    }

private:
    void index();

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> ids_;
    int pad_ = -1;
    int bos_ = -1;
    int eos_ = -1;
};

}  // namespace plad::lm
