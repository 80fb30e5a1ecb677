#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "mkgc/errors.hpp"

namespace mkgc {

// Whitespace + lowercasing tokenizer; subword modeling is out of scope.
std::vector<std::string> tokenize(const std::string& text);

// Token ids: fixed special tokens first, then regular words in registration
// order, then one dedicated token per entity in a contiguous range at the end
// of the id space (the entity embedding rows live in their own table).
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kCls = 1;
    static constexpr int kSep = 2;
    static constexpr int kMask = 3;
    static constexpr int kHeadOpen = 4;  // <h>
    static constexpr int kHeadClose = 5; // </h>
    static constexpr int kTailOpen = 6;  // <t>
    static constexpr int kTailClose = 7; // </t>

    Vocabulary();

    int add_word(const std::string& token);              // idempotent
    void add_words(const std::vector<std::string>& toks);
    void register_entities(const std::vector<std::string>& entity_ids);

    int lookup(const std::string& token) const;          // throws vocab_error
    bool contains(const std::string& token) const;
    const std::string& token(int id) const;

    std::vector<int> encode(const std::vector<std::string>& tokens) const;

    int base_size() const { return static_cast<int>(base_tokens_.size()); }
    int entity_count() const { return n_entities_; }
    int entity_token_id(int entity_index) const;
    // Entity index for an id in the entity range, -1 otherwise.
    int entity_index_of(int token_id) const;
    int size() const { return base_size() + n_entities_; }

private:
    std::vector<std::string> base_tokens_;
    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> entity_tokens_;
    int n_entities_ = 0;
};

} // namespace mkgc
