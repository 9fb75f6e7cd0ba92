#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace rlvr {

// Token table with dense ids. Id 0 is the reserved pad token and exactly one
// end-of-sequence token must be present.
class Vocab {
 public:
  // tokens[0] must be the pad token; eos must appear exactly once.
  Vocab(std::vector<std::string> tokens, const std::string& eos_token);

  // The project-wide vocabulary used by the synthetic task environments.
  static Vocab standard();

  int size() const { return static_cast<int>(tokens_.size()); }
  int pad_id() const { return 0; }
  int eos_id() const { return eos_id_; }

  const std::string& token(int id) const;
  bool has_token(const std::string& tok) const { return index_.count(tok) != 0; }
  int id(const std::string& tok) const;

  std::vector<int> encode(const std::vector<std::string>& toks) const;
  // Concatenates token strings; the inverse of encode for valid id lists.
  std::string decode(const std::vector<int>& ids) const;

  bool valid_id(int id) const { return id >= 0 && id < size(); }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int eos_id_;
};

}  // namespace rlvr
