#include "plad/lm/vocabulary.hpp"

#include <sstream>
#include <stdexcept>

namespace plad::lm {

Vocabulary::Vocabulary(std::vector<std::string> symbols) : tokens_(std::move(symbols)) {
    pad_ = static_cast<int>(tokens_.size());
    tokens_.emplace_back("<pad>");
    bos_ = pad_ + 1;
    tokens_.emplace_back("<bos>");
    eos_ = pad_ + 2;
    tokens_.emplace_back("<eos>");
    index();
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens, int pad, int bos, int eos) {
    Vocabulary v;
    v.tokens_ = std::move(tokens);
    v.pad_ = pad;
    v.bos_ = bos;
    v.eos_ = eos;
    const int n = v.size();
    if (pad < 0 || bos < 0 || eos < 0 || pad >= n || bos >= n || eos >= n || pad == bos || pad == eos || bos == eos) {
        throw std::invalid_argument("vocabulary special ids must be distinct and in range");
    }
    v.index();
    return v;
}

void Vocabulary::index() {
    ids_.clear();
    for (int i = 0; i < size(); ++i) {
        const auto& tok = tokens_[static_cast<std::size_t>(i)];
        if (tok.empty() || tok.find_first_of(" \t\r\n") != std::string::npos) {
            throw std::invalid_argument("vocabulary symbols must be non-empty and contain no whitespace");
        }
        if (!ids_.emplace(tok, i).second) throw std::invalid_argument("duplicate vocabulary symbol '" + tok + "'");
    }
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
    return tokens_[static_cast<std::size_t>(id)];
}

int Vocabulary::id(std::string_view token) const {
    auto it = ids_.find(std::string(token));
    if (it == ids_.end()) throw std::invalid_argument("unknown symbol '" + std::string(token) + "'");
    return it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }

Tokens Vocabulary::encode(std::string_view text) const {
    Tokens out;
    std::istringstream in{std::string(text)};
    std::string sym;
    while (in >> sym) out.push_back(id(sym));
    return out;
}

std::string Vocabulary::decode(const Tokens& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == eos_) break;
        if (!out.empty()) out += ' ';
        out += token(id);
    }
    return out;
}

}  // namespace plad::lm
