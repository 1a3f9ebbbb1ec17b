#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dcrd/common.hpp"
#include "dcrd/model.hpp"

namespace dcrd {

// Closed word-level vocabulary. Newlines tokenize as their own "\n" token;
// everything else splits on spaces. Unknown words map to <unk>.
class Vocab {
public:
    static constexpr const char* kUnk = "<unk>";
    static constexpr const char* kEnd = "<end>";

    Vocab() {
        add(kUnk);
        add(kEnd);
    }

    TokenId add(const std::string& word) {
        auto it = index_.find(word);
        if (it != index_.end()) return it->second;
        const TokenId id = static_cast<TokenId>(words_.size());
        words_.push_back(word);
        index_.emplace(word, id);
        return id;
    }

    TokenId id(const std::string& word) const {
        auto it = index_.find(word);
        return it == index_.end() ? unk_id() : it->second;
    }

    bool contains(const std::string& word) const { return index_.count(word) > 0; }
    const std::string& word(TokenId id) const { return words_[static_cast<std::size_t>(id)]; }
    int size() const { return static_cast<int>(words_.size()); }
    TokenId unk_id() const { return 0; }
    TokenId end_id() const { return 1; }

    TokenSeq tokenize(std::string_view text) const {
        TokenSeq out;
        std::string word;
        auto flush = [&] {
            if (!word.empty()) {
                out.push_back(id(word));
                word.clear();
            }
        };
        for (char c : text) {
            if (c == '\n') {
                flush();
                out.push_back(id("\n"));
            } else if (c == ' ' || c == '\t' || c == '\r') {
                flush();
            } else {
                word.push_back(c);
            }
        }
        flush();
        return out;
    }

    std::string detokenize(const TokenSeq& tokens) const {
        std::string out;
        for (TokenId t : tokens) {
            const std::string& w = word(t);
            if (w == "\n") {
                out += '\n';
                continue;
            }
            if (!out.empty() && out.back() != '\n') out += ' ';
            out += w;
        }
        return out;
    }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, TokenId> index_;
};

// Fixed zero-shot prompt template; the without-context variant leaves the
// context slot empty.
inline std::string assemble_prompt_text(const std::string& context, const std::string& question) {
    return context +
           "\n Using only the references listed above, answer the following question: \n Question: " +
           question + "\n Answer";
}

inline const std::vector<std::string>& template_words() {
    static const std::vector<std::string> words = {
        "\n",     "Using",     "only",      "the",       "references", "listed", "above,",
        "answer", "following", "question:", "Question:", "Answer"};
    return words;
}

}  // namespace dcrd
