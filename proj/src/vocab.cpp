#include "mkgc/vocab.hpp"

#include <cctype>

namespace mkgc {

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

Vocabulary::Vocabulary() {
    const char* specials[] = {"[pad]", "[cls]", "[sep]", "[mask]", "<h>", "</h>", "<t>", "</t>"};
    for (const char* s : specials) {
        token_to_id_.emplace(s, static_cast<int>(base_tokens_.size()));
        base_tokens_.emplace_back(s);
    }
}

int Vocabulary::add_word(const std::string& token) {
    if (n_entities_ > 0) throw state_error("cannot add words after entities are registered");
    auto it = token_to_id_.find(token);
    if (it != token_to_id_.end()) return it->second;
    const int id = static_cast<int>(base_tokens_.size());
    token_to_id_.emplace(token, id);
    base_tokens_.push_back(token);
    return id;
}

void Vocabulary::add_words(const std::vector<std::string>& toks) {
    for (const auto& t : toks) add_word(t);
}

void Vocabulary::register_entities(const std::vector<std::string>& entity_ids) {
    if (n_entities_ > 0) throw state_error("entities already registered");
    for (const auto& e : entity_ids) {
        const std::string tok = "<" + e + ">";
        if (token_to_id_.count(tok)) throw vocab_error("entity token collides: " + tok);
        token_to_id_.emplace(tok, base_size() + n_entities_);
        entity_tokens_.push_back(tok);
        ++n_entities_;
    }
}

int Vocabulary::lookup(const std::string& token) const {
    auto it = token_to_id_.find(token);
    if (it == token_to_id_.end()) throw vocab_error("unknown token '" + token + "'");
    return it->second;
}

bool Vocabulary::contains(const std::string& token) const {
    return token_to_id_.count(token) > 0;
}

const std::string& Vocabulary::token(int id) const {
    if (id < 0 || id >= size()) throw vocab_error("token id out of range");
    if (id < base_size()) return base_tokens_[static_cast<std::size_t>(id)];
    return entity_tokens_[static_cast<std::size_t>(id - base_size())];
}

std::vector<int> Vocabulary::encode(const std::vector<std::string>& tokens) const {
    std::vector<int> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(lookup(t));
    return ids;
}

int Vocabulary::entity_token_id(int entity_index) const {
    if (entity_index < 0 || entity_index >= n_entities_) {
        throw vocab_error("entity index out of range");
    }
    return base_size() + entity_index;
}

int Vocabulary::entity_index_of(int token_id) const {
    if (token_id >= base_size() && token_id < size()) return token_id - base_size();
    return -1;
}

} // namespace mkgc
