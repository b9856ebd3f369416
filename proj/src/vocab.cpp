#include "treegen/vocab.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace treegen {

Vocab::Vocab() {
  add("<pad>");
  add("<unk>");
}

int Vocab::add(const std::string& tok) {
  auto it = ids_.find(tok);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(tok);
  ids_[tok] = id;
  return id;
}

int Vocab::id(const std::string& tok) const {
  auto it = ids_.find(tok);
  return it == ids_.end() ? kUnk : it->second;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  Vocab v;
  for (const auto& t : tokens) v.add(t);
  return v;
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary file: " + path);
  Vocab v;
  v.tokens_.clear();
  v.ids_.clear();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    int id = static_cast<int>(v.tokens_.size());
    v.tokens_.push_back(line);
    v.ids_[line] = id;
  }
  if (v.size() < 2)
    throw std::runtime_error("vocabulary file must reserve ids 0 (pad) and 1 (unk): " + path);
  return v;
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write vocabulary file: " + path);
  for (const auto& t : tokens_) out << t << "\n";
}

namespace {

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

void split_plain(const std::string& text, std::vector<std::string>& out) {
  size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (is_word_char(c)) {
      size_t e = i;
      while (e < text.size() && is_word_char(text[e])) ++e;
      out.push_back(text.substr(i, e - i));
      i = e;
    } else {
      out.push_back(std::string(1, c));
      ++i;
    }
  }
}

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<std::string> tokenize(const std::string& text, TokenizeMode mode) {
  std::vector<std::string> out;
  if (mode == TokenizeMode::Plain) {
    split_plain(text, out);
    return out;
  }
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty()) continue;
    size_t colon = t.find(':');
    // attribute line: "key: value" with a one-word key; value stays atomic
    if (colon != std::string::npos && colon > 0 &&
        t.substr(0, colon).find(' ') == std::string::npos) {
      std::string value = trim(t.substr(colon + 1));
      if (!value.empty()) {
        out.push_back(t.substr(0, colon));
        out.push_back(":");
        out.push_back(value);
        continue;
      }
    }
    split_plain(t, out);
  }
  return out;
}

NlInput make_nl_input(const std::vector<std::string>& tokens, const Vocab& words,
                      const Vocab& chars, int char_max_len) {
  if (tokens.empty()) throw std::runtime_error("empty token list");
  NlInput in;
  in.tokens = tokens;
  for (const auto& t : tokens) {
    in.token_ids.push_back(words.id(t));
    std::vector<int> row(static_cast<size_t>(char_max_len), Vocab::kPad);
    for (int i = 0; i < char_max_len && i < static_cast<int>(t.size()); ++i)
      row[static_cast<size_t>(i)] = chars.id(std::string(1, t[static_cast<size_t>(i)]));
    in.char_ids.push_back(std::move(row));
  }
  return in;
}

}  // namespace treegen
