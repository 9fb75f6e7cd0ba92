#include "rlvr/vocab.hpp"

#include <stdexcept>

namespace rlvr {

Vocab::Vocab(std::vector<std::string> tokens, const std::string& eos_token)
    : tokens_(std::move(tokens)), eos_id_(-1) {
  if (tokens_.empty()) throw std::invalid_argument("vocab: empty token list");
  for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) {
    if (!index_.emplace(tokens_[i], i).second)
      throw std::invalid_argument("vocab: duplicate token '" + tokens_[i] + "'");
    if (tokens_[i] == eos_token) eos_id_ = i;
  }
  if (eos_id_ < 0) throw std::invalid_argument("vocab: eos token not present");
  if (eos_id_ != 1) throw std::invalid_argument("vocab: eos must sit at id 1 (pad is id 0)");
}

Vocab Vocab::standard() {
  std::vector<std::string> toks = {
      "<pad>", "<eos>",
      "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
      "+", "-", "*", "/", "%", "=", " ", ".",
      "\\boxed{", "}",
      "mod", "sum", "ans",
      "rethink", "recheck", "recalculate",
      "#",
  };
  return Vocab(std::move(toks), "<eos>");
}

const std::string& Vocab::token(int id) const {
  if (!valid_id(id)) throw std::invalid_argument("vocab: token id out of range");
  return tokens_[id];
}

int Vocab::id(const std::string& tok) const {
  auto it = index_.find(tok);
  if (it == index_.end()) throw std::invalid_argument("vocab: unknown token '" + tok + "'");
  return it->second;
}

std::vector<int> Vocab::encode(const std::vector<std::string>& toks) const {
  std::vector<int> ids;
  ids.reserve(toks.size());
  for (const auto& t : toks) ids.push_back(id(t));
  return ids;
}

std::string Vocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) out += token(id);
  return out;
}

}  // namespace rlvr
