#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "charkb/errors.hpp"

namespace charkb {

enum class EmbeddingMode { Char, Word };

inline const char* mode_name(EmbeddingMode m) {
  return m == EmbeddingMode::Char ? "char" : "word";
}

namespace text {

/// Minimal UTF-8 decoding; invalid bytes are passed through as single
/// codepoints so that arbitrary input never throws.
inline std::vector<uint32_t> codepoints(const std::string& s) {
  std::vector<uint32_t> out;
  size_t i = 0;
  while (i < s.size()) {
    const unsigned char b = static_cast<unsigned char>(s[i]);
    uint32_t cp = b;
    size_t extra = 0;
    if (b >= 0xF0) extra = 3, cp = b & 0x07u;
    else if (b >= 0xE0) extra = 2, cp = b & 0x0Fu;
    else if (b >= 0xC0) extra = 1, cp = b & 0x1Fu;
    if (extra > 0 && i + extra < s.size()) {
      bool ok = true;
      for (size_t j = 1; j <= extra; ++j) {
        const unsigned char c = static_cast<unsigned char>(s[i + j]);
        if ((c & 0xC0u) != 0x80u) { ok = false; break; }
        cp = (cp << 6) | (c & 0x3Fu);
      }
      if (ok) {
        i += extra + 1;
        out.push_back(cp);
        continue;
      }
    }
    out.push_back(b);
    ++i;
  }
  return out;
}

inline void append_utf8(std::string& s, uint32_t cp) {
  if (cp < 0x80) {
    s.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    s.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    s.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    s.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    s.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

inline std::string to_lower_ascii(const std::string& s) {
  std::string out = s;
  for (char& c : out)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace text

/// Word tokenizer for the word-embedding baseline: lowercase, split on
/// whitespace, punctuation detached as separate single-character tokens.
inline std::vector<std::string> tokenize_words(const std::string& s) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : s) {
    if (std::isspace(c)) {
      flush();
    } else if (c < 0x80 && !std::isalnum(c) && c != '\'') {
      flush();
      tokens.push_back(std::string(1, static_cast<char>(c)));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

/// Token vocabulary with four fixed reserved slots. In char mode a token is
/// one codepoint; in word mode a token is a lowercased word or punctuation
/// mark. Built from training data only, then frozen.
class Vocab {
 public:
  static constexpr int32_t kStart = 0;
  static constexpr int32_t kEnd = 1;
  static constexpr int32_t kPad = 2;
  static constexpr int32_t kUnk = 3;
  static constexpr int32_t kReserved = 4;

  explicit Vocab(EmbeddingMode mode = EmbeddingMode::Char) : mode_(mode) {}

  template <class Iterable>
  static Vocab build(const Iterable& corpus, EmbeddingMode mode) {
    Vocab v(mode);
    std::set<std::string> tokens;
    bool any = false;
    for (const std::string& s : corpus) {
      any = true;
      for (const std::string& tok : v.split(s)) tokens.insert(tok);
    }
    if (!any) throw EmptyCorpus("build_vocab: empty training corpus");
    for (const std::string& tok : tokens) {
      v.index_of_.emplace(tok, static_cast<int32_t>(v.entries_.size()) + kReserved);
      v.entries_.push_back(tok);
    }
    return v;
  }

  EmbeddingMode mode() const { return mode_; }
  int32_t size() const { return static_cast<int32_t>(entries_.size()) + kReserved; }

  int32_t lookup(const std::string& token) const {
    auto it = index_of_.find(token);
    return it == index_of_.end() ? kUnk : it->second;
  }

  /// Inverse of lookup for non-reserved indices; reserved render symbolically.
  std::string token_at(int32_t index) const {
    switch (index) {
      case kStart: return "<S>";
      case kEnd: return "</S>";
      case kPad: return "<P>";
      case kUnk: return "<UNK>";
      default: return entries_.at(static_cast<size_t>(index - kReserved));
    }
  }

  std::vector<std::string> split(const std::string& s) const {
    if (mode_ == EmbeddingMode::Word) return tokenize_words(s);
    std::vector<std::string> out;
    for (uint32_t cp : text::codepoints(s)) {
      std::string t;
      text::append_utf8(t, cp);
      out.push_back(std::move(t));
    }
    return out;
  }

  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write vocabulary file " + path);
    f << "#charkb-vocab v1 mode=" << mode_name(mode_) << "\n";
    f << "0\t<S>\n1\t</S>\n2\t<P>\n3\t<UNK>\n";
    for (size_t i = 0; i < entries_.size(); ++i) {
      f << (i + kReserved) << '\t';
      if (mode_ == EmbeddingMode::Char) {
        f << text::codepoints(entries_[i])[0];
      } else {
        f << entries_[i];
      }
      f << '\n';
    }
  }

  static Vocab load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot read vocabulary file " + path);
    std::string line;
    long lineno = 0;
    if (!std::getline(f, line)) throw ParseError(path, 1, "empty vocabulary file");
    ++lineno;
    EmbeddingMode mode;
    if (line == "#charkb-vocab v1 mode=char") mode = EmbeddingMode::Char;
    else if (line == "#charkb-vocab v1 mode=word") mode = EmbeddingMode::Word;
    else throw ParseError(path, lineno, "bad vocabulary header");
    Vocab v(mode);
    while (std::getline(f, line)) {
      ++lineno;
      if (line.empty()) continue;
      const size_t tab = line.find('\t');
      if (tab == std::string::npos) throw ParseError(path, lineno, "missing tab");
      const int32_t idx = std::stoi(line.substr(0, tab));
      const std::string entry = line.substr(tab + 1);
      if (idx < kReserved) continue;  // reserved slots are implicit
      if (idx != v.size()) throw ParseError(path, lineno, "indices out of order");
      std::string token;
      if (mode == EmbeddingMode::Char) {
        text::append_utf8(token, static_cast<uint32_t>(std::stoul(entry)));
      } else {
        token = entry;
      }
      v.index_of_.emplace(token, idx);
      v.entries_.push_back(token);
    }
    return v;
  }

 private:
  EmbeddingMode mode_;
  std::vector<std::string> entries_;       // non-reserved, in index order
  std::map<std::string, int32_t> index_of_;
};

/// Padded token-index sequence: [<S> P P P tokens P P P </S>].
struct EncodedText {
  std::vector<int32_t> indices;
  std::string original;

  int64_t size() const { return static_cast<int64_t>(indices.size()); }
};

inline EncodedText encode_padded(const std::string& s, const Vocab& vocab) {
  EncodedText e;
  e.original = s;
  const std::vector<std::string> tokens = vocab.split(s);
  e.indices.reserve(tokens.size() + 8);
  e.indices.push_back(Vocab::kStart);
  e.indices.insert(e.indices.end(), 3, Vocab::kPad);
  for (const std::string& t : tokens) e.indices.push_back(vocab.lookup(t));
  e.indices.insert(e.indices.end(), 3, Vocab::kPad);
  e.indices.push_back(Vocab::kEnd);
  return e;
}

/// Strips reserved symbols and maps indices back to text. Exact inverse of
/// encode_padded for char-mode strings with no OOV characters.
inline std::string decode_stripped(const EncodedText& e, const Vocab& vocab) {
  std::string out;
  bool first = true;
  for (int32_t ix : e.indices) {
    if (ix < Vocab::kReserved) continue;
    if (vocab.mode() == EmbeddingMode::Word && !first) out.push_back(' ');
    out += vocab.token_at(ix);
    first = false;
  }
  return out;
}

}  // namespace charkb
