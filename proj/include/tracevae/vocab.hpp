#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace tracevae {

using TokenId = std::size_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kSep = 3;
inline constexpr TokenId kUnk = 4;
inline constexpr std::size_t kNumReserved = 5;
inline constexpr std::array<std::string_view, kNumReserved> kReservedNames{"<pad>", "<bos>", "<eos>", "<sep>", "<unk>"};

enum class TokenLevel { character, word };

inline TokenLevel parse_token_level(const std::string &s) {
    if (s == "char") return TokenLevel::character;
    if (s == "word") return TokenLevel::word;
    throw std::invalid_argument("unknown token level '" + s + "' (expected char|word)");
}

inline std::string to_string(TokenLevel l) { return l == TokenLevel::character ? "char" : "word"; }

// Splits a line into UTF-8 code points or whitespace-separated words.
inline std::vector<std::string> tokenize(std::string_view line, TokenLevel level) {
    std::vector<std::string> out;
    if (level == TokenLevel::word) {
        std::istringstream is{std::string(line)};
        std::string w;
        while (is >> w) out.push_back(w);
        return out;
    }
    for (std::size_t i = 0; i < line.size();) {
        const auto lead = static_cast<unsigned char>(line[i]);
        std::size_t n = 1;
        if (lead >= 0xF0)
            n = 4;
        else if (lead >= 0xE0)
            n = 3;
        else if (lead >= 0xC0)
            n = 2;
        n = std::min(n, line.size() - i);
        out.emplace_back(line.substr(i, n));
        i += n;
    }
    return out;
}

class Vocab {
  public:
    Vocab() {
        for (auto name : kReservedNames) id_to_token_.emplace_back(name);
    }

    std::size_t size() const { return id_to_token_.size(); }
    TokenLevel level() const { return level_; }
    void set_level(TokenLevel l) { level_ = l; }

    const std::string &token(TokenId id) const {
        if (id >= size()) throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
        return id_to_token_[id];
    }

    TokenId id(const std::string &tok) const {
        auto it = token_to_id_.find(tok);
        return it == token_to_id_.end() ? kUnk : it->second;
    }

    bool contains(const std::string &tok) const { return token_to_id_.count(tok) != 0; }

    std::vector<TokenId> encode(std::string_view line) const {
        std::vector<TokenId> ids;
        for (const auto &t : tokenize(line, level_)) ids.push_back(id(t));
        return ids;
    }

    // Drops reserved ids except UNK, joins by level.
    std::string decode(const std::vector<TokenId> &ids) const {
        std::string out;
        bool first = true;
        for (TokenId i : ids) {
            if (i < kNumReserved && i != kUnk) continue;
            if (level_ == TokenLevel::word && !first) out += ' ';
            out += token(i);
            first = false;
        }
        return out;
    }

    std::vector<std::string> tokens_of(const std::vector<TokenId> &ids) const {
        std::vector<std::string> out;
        for (TokenId i : ids)
            if (i >= kNumReserved || i == kUnk) out.push_back(token(i));
        return out;
    }

    void add(const std::string &tok) {
        if (token_to_id_.count(tok)) return;
        for (auto name : kReservedNames)
            if (tok == name) throw std::invalid_argument("vocab: token '" + tok + "' collides with a reserved name");
        token_to_id_.emplace(tok, id_to_token_.size());
        id_to_token_.push_back(tok);
    }

    void save(const std::string &path) const {
        std::ofstream os(path);
        if (!os) throw std::runtime_error("vocab: cannot write " + path);
        for (const auto &t : id_to_token_) os << t << '\n';
    }

    static Vocab load(const std::string &path, TokenLevel level) {
        std::ifstream is(path);
        if (!is) throw std::runtime_error("vocab: cannot read " + path);
        Vocab v;
        v.level_ = level;
        std::string line;
        std::size_t n = 0;
        while (std::getline(is, line)) {
            if (n < kNumReserved) {
                if (line != kReservedNames[n])
                    throw std::runtime_error("vocab: line " + std::to_string(n + 1) + " must be " +
                                             std::string(kReservedNames[n]));
            } else {
                if (v.contains(line)) throw std::runtime_error("vocab: duplicate token '" + line + "'");
                v.add(line);
            }
            ++n;
        }
        if (n < kNumReserved) throw std::runtime_error("vocab: file has fewer than 5 reserved lines");
        return v;
    }

    bool operator==(const Vocab &o) const { return id_to_token_ == o.id_to_token_ && level_ == o.level_; }

  private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, TokenId> token_to_id_;
    TokenLevel level_ = TokenLevel::character;
};

// Frequency-descending, then lexicographic. `max_size` caps the total size
// including the reserved ids (0 = unlimited); overflow symbols map to UNK.
// Corpus tokens spelled like reserved names are treated as unknown.
inline Vocab build_vocab(const std::vector<std::string> &corpus, TokenLevel level, std::size_t max_size = 0) {
    if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
    std::map<std::string, std::size_t> freq;
    for (const auto &line : corpus)
        for (auto &t : tokenize(line, level)) {
            if (std::find(kReservedNames.begin(), kReservedNames.end(), t) != kReservedNames.end()) continue;
            ++freq[t];
        }
    if (freq.empty()) throw std::invalid_argument("build_vocab: corpus has no tokens");
    std::vector<std::pair<std::string, std::size_t>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(), [](const auto &a, const auto &b) { return a.second > b.second; });
    Vocab v;
    v.set_level(level);
    for (const auto &[tok, n] : items) {
        if (max_size && v.size() >= max_size) break;
        v.add(tok);
    }
    return v;
}

} // namespace tracevae
