#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace treegen {

// Line-per-token vocabulary, line number = id. Ids 0 and 1 are reserved for
// padding and unknown.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  Vocab();
  static Vocab from_tokens(const std::vector<std::string>& tokens);  // builds, dedups
  static Vocab load(const std::string& path);
  void save(const std::string& path) const;

  int add(const std::string& tok);          // returns existing id if present
  int id(const std::string& tok) const;     // kUnk when absent
  const std::string& token(int id) const { return tokens_.at(static_cast<size_t>(id)); }
  int size() const { return static_cast<int>(tokens_.size()); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

struct NlInput {
  std::vector<std::string> tokens;
  std::vector<int> token_ids;
  std::vector<std::vector<int>> char_ids;  // [L][M], padded/truncated
};

enum class TokenizeMode { Plain, Structural };

// Plain: split on whitespace and punctuation (punctuation kept as tokens).
// Structural: each "key: value" line yields the key, ":" and the value as one
// atomic token; other lines fall back to plain splitting.
std::vector<std::string> tokenize(const std::string& text, TokenizeMode mode);

NlInput make_nl_input(const std::vector<std::string>& tokens, const Vocab& words,
                      const Vocab& chars, int char_max_len);

}  // namespace treegen
