#include "rlvr/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

namespace rlvr {

namespace {

const std::string kBoxed = "\\boxed{";

// Matches the brace opened at text[open] (which must be '{'); returns the
// index of the closing brace or npos if unbalanced.
std::size_t match_brace(const std::string& text, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < text.size(); ++i) {
    if (text[i] == '{') ++depth;
    if (text[i] == '}') {
      --depth;
      if (depth == 0) return i;
    }
  }
  return std::string::npos;
}

}  // namespace

std::optional<std::string> extract_boxed(const std::string& text) {
  std::optional<std::string> last;
  std::size_t pos = 0;
  while ((pos = text.find(kBoxed, pos)) != std::string::npos) {
    std::size_t open = pos + kBoxed.size() - 1;  // the '{'
    std::size_t close = match_brace(text, open);
    if (close != std::string::npos) last = text.substr(open + 1, close - open - 1);
    pos += kBoxed.size();
  }
  return last;
}

namespace {

std::string strip(const std::string& s) {
  std::size_t b = 0, e = s.size();
  auto trimmable = [](char c) { return std::isspace(static_cast<unsigned char>(c)) || c == '$'; };
  while (b < e && trimmable(s[b])) ++b;
  while (e > b && (trimmable(s[e - 1]) || s[e - 1] == '.')) {
    // a trailing period is sentence punctuation unless it follows a digit run
    // that already contains a decimal point elsewhere; simplest rule: drop
    // trailing dots and dollar signs outright, numbers never end in '.'
    --e;
  }
  return s.substr(b, e - b);
}

bool parse_int64(const std::string& s, long long& out) {
  if (s.empty()) return false;
  std::size_t i = 0;
  bool neg = false;
  if (s[i] == '+' || s[i] == '-') {
    neg = s[i] == '-';
    ++i;
  }
  if (i == s.size()) return false;
  unsigned long long acc = 0;
  for (; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    if (acc > (0x7fffffffffffffffull - 9) / 10) return false;  // overflow
    acc = acc * 10 + static_cast<unsigned long long>(s[i] - '0');
  }
  out = neg ? -static_cast<long long>(acc) : static_cast<long long>(acc);
  return true;
}

long long gcd_ll(long long a, long long b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    long long t = a % b;
    a = b;
    b = t;
  }
  return a;
}

CanonicalAnswer make_rational(long long num, long long den, const std::string& raw) {
  CanonicalAnswer a;
  a.raw = raw;
  if (den == 0) {  // not a number after all
    a.kind = CanonicalAnswer::Kind::kString;
    a.text = raw;
    std::transform(a.text.begin(), a.text.end(), a.text.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return a;
  }
  if (den < 0) {
    den = -den;
    num = -num;
  }
  long long g = gcd_ll(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  a.kind = CanonicalAnswer::Kind::kRational;
  a.num = num;
  a.den = den;
  return a;
}

// "\frac{a}{b}" starting at position i; returns numerator/denominator strings.
bool parse_frac_at(const std::string& s, std::size_t i, std::string& num, std::string& den,
                   std::size_t& end) {
  static const std::string kFrac = "\\frac{";
  if (s.compare(i, kFrac.size(), kFrac) != 0) return false;
  std::size_t open1 = i + kFrac.size() - 1;
  std::size_t close1 = match_brace(s, open1);
  if (close1 == std::string::npos) return false;
  if (close1 + 1 >= s.size() || s[close1 + 1] != '{') return false;
  std::size_t close2 = match_brace(s, close1 + 1);
  if (close2 == std::string::npos) return false;
  num = s.substr(open1 + 1, close1 - open1 - 1);
  den = s.substr(close1 + 2, close2 - close1 - 2);
  end = close2 + 1;
  return true;
}

// Canonical decimal string: sign, integer digits without leading zeros,
// optional fraction without trailing zeros. "-0" collapses to "0".
bool canonicalize_decimal(const std::string& s, std::string& out) {
  std::size_t i = 0;
  bool neg = false;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
    neg = s[i] == '-';
    ++i;
  }
  std::string ip, fp;
  bool dot = false, any = false;
  for (; i < s.size(); ++i) {
    char c = s[i];
    if (c == '.') {
      if (dot) return false;
      dot = true;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      (dot ? fp : ip) += c;
      any = true;
    } else if (c == ',' && !dot && !ip.empty()) {
      continue;  // thousands separator
    } else {
      return false;
    }
  }
  if (!any) return false;
  std::size_t nz = ip.find_first_not_of('0');
  ip = nz == std::string::npos ? "0" : ip.substr(nz);
  std::size_t last = fp.find_last_not_of('0');
  fp = last == std::string::npos ? "" : fp.substr(0, last + 1);
  if (ip == "0" && fp.empty()) {
    out = "0";
    return true;
  }
  out = (neg ? "-" : "") + ip + (fp.empty() ? "" : "." + fp);
  return true;
}

// Exact rational value of a canonical decimal, when it fits 64 bits.
bool decimal_to_rational(const std::string& dec, long long& num, long long& den) {
  std::string digits;
  long long scale = 1;
  bool neg = false, dot = false;
  for (char c : dec) {
    if (c == '-') {
      neg = true;
    } else if (c == '.') {
      dot = true;
    } else {
      digits += c;
      if (dot) {
        if (scale > 0x7fffffffffffffffll / 10) return false;
        scale *= 10;
      }
    }
  }
  long long v = 0;
  if (!parse_int64(digits, v)) return false;
  num = neg ? -v : v;
  den = scale;
  long long g = gcd_ll(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  return true;
}

}  // namespace

CanonicalAnswer normalize_answer(const std::string& raw) {
  std::string s = strip(raw);
  CanonicalAnswer a;
  a.raw = raw;

  // optional leading sign applying to a fraction or mixed number
  long long sign = 1;
  std::size_t i = 0;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
    if (s[i] == '-') sign = -1;
    ++i;
  }

  // mixed number or plain \frac: [whole]\frac{a}{b}
  std::size_t frac_pos = s.find("\\frac{", i);
  if (frac_pos != std::string::npos) {
    std::string whole_str = s.substr(i, frac_pos - i);
    std::string ns, ds;
    std::size_t end = 0;
    long long whole = 0, num = 0, den = 0;
    if (parse_frac_at(s, frac_pos, ns, ds, end) && end == s.size() && parse_int64(ns, num) &&
        parse_int64(ds, den) && den != 0) {
      if (whole_str.empty()) return make_rational(sign * num, den, raw);
      // mixed numbers like 22\frac{1}{2} need nonnegative parts
      if (parse_int64(whole_str, whole) && whole >= 0 && num >= 0 && den > 0)
        return make_rational(sign * (whole * den + num), den, raw);
    }
  }

  // plain a/b
  std::size_t slash = s.find('/');
  if (slash != std::string::npos && s.find('/', slash + 1) == std::string::npos) {
    long long num = 0, den = 0;
    if (parse_int64(s.substr(0, slash), num) && parse_int64(s.substr(slash + 1), den) &&
        den != 0) {
      return make_rational(num, den, raw);
    }
  }

  // plain integer or decimal
  std::string dec;
  if (canonicalize_decimal(s, dec)) {
    a.kind = CanonicalAnswer::Kind::kDecimal;
    a.decimal = dec;
    return a;
  }

  a.kind = CanonicalAnswer::Kind::kString;
  a.text = s;
  std::transform(a.text.begin(), a.text.end(), a.text.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return a;
}

namespace {

bool rational_equals_decimal(long long num, long long den, const std::string& dec) {
  long long dn = 0, dd = 0;
  if (decimal_to_rational(dec, dn, dd)) {
    return static_cast<__int128>(num) * dd == static_cast<__int128>(dn) * den;
  }
  return false;  // decimal too large for exact comparison; cannot be equal to a 64-bit rational anyway
}

}  // namespace

bool answers_equivalent(const CanonicalAnswer& a, const CanonicalAnswer& b) {
  using Kind = CanonicalAnswer::Kind;
  if (a.kind == Kind::kString || b.kind == Kind::kString)
    return a.kind == Kind::kString && b.kind == Kind::kString && a.text == b.text;
  if (a.kind == Kind::kRational && b.kind == Kind::kRational)
    return static_cast<__int128>(a.num) * b.den == static_cast<__int128>(b.num) * a.den;
  if (a.kind == Kind::kDecimal && b.kind == Kind::kDecimal) return a.decimal == b.decimal;
  const CanonicalAnswer& r = a.kind == Kind::kRational ? a : b;
  const CanonicalAnswer& d = a.kind == Kind::kDecimal ? a : b;
  return rational_equals_decimal(r.num, r.den, d.decimal);
}

int outcome_reward(const std::string& response_text, const std::string& label) {
  std::optional<std::string> boxed = extract_boxed(response_text);
  if (!boxed) return 0;
  return answers_equivalent(normalize_answer(*boxed), normalize_answer(label)) ? 1 : 0;
}

int format_reward(const std::string& response_text) {
  std::optional<std::string> boxed = extract_boxed(response_text);
  return boxed && !boxed->empty() ? 1 : 0;
}

namespace {

std::string render_decimal_shifted(long long digits, int frac_places) {
  // digits scaled by 10^-frac_places, rendered canonically
  bool neg = digits < 0;
  unsigned long long mag = neg ? -static_cast<unsigned long long>(digits) : digits;
  std::string body = std::to_string(mag);
  std::string out;
  if (frac_places == 0) {
    out = body;
  } else {
    while (static_cast<int>(body.size()) <= frac_places) body.insert(body.begin(), '0');
    out = body.substr(0, body.size() - frac_places) + "." + body.substr(body.size() - frac_places);
  }
  std::string canon;
  canonicalize_decimal((neg ? "-" : "") + out, canon);
  return canon;
}

}  // namespace

std::string perturb_label(const std::string& label, Rng& rng) {
  CanonicalAnswer base = normalize_answer(label);
  if (base.kind == CanonicalAnswer::Kind::kString)
    throw std::invalid_argument("perturb_label: unsupported label '" + label + "'");

  for (int attempt = 0; attempt < 10000; ++attempt) {
    std::string candidate;
    if (base.kind == CanonicalAnswer::Kind::kDecimal) {
      // draws, in order: direction, magnitude k in [1,10], sign flip
      long long dir = rng.next_bool() ? 1 : -1;
      long long k = 1 + static_cast<long long>(rng.next_below(10));
      bool flip = rng.next_bool();
      long long digits = 0;
      int places = 0;
      {
        std::string body;
        bool dot = false;
        bool neg = false;
        for (char c : base.decimal) {
          if (c == '-') neg = true;
          else if (c == '.') dot = true;
          else {
            body += c;
            if (dot) ++places;
          }
        }
        if (!parse_int64(body, digits))
          throw std::invalid_argument("perturb_label: label magnitude too large");
        if (neg) digits = -digits;
      }
      long long shift = k;
      for (int p = 0; p < places; ++p) shift *= 10;
      long long moved = digits + dir * shift;
      if (flip) moved = -moved;
      candidate = render_decimal_shifted(moved, places);
    } else {
      long long dn = (rng.next_bool() ? 1 : -1) * (1 + static_cast<long long>(rng.next_below(10)));
      long long dd = (rng.next_bool() ? 1 : -1) * (1 + static_cast<long long>(rng.next_below(10)));
      long long num = base.num + dn;
      long long den = base.den + dd;
      if (den <= 0) continue;
      long long g = gcd_ll(num, den);
      if (g > 1) {
        num /= g;
        den /= g;
      }
      candidate = std::to_string(num) + "/" + std::to_string(den);
    }
    if (!answers_equivalent(normalize_answer(candidate), base)) return candidate;
  }
  throw std::runtime_error("perturb_label: could not find a non-equivalent label");
}

std::vector<CorpusTriple> load_corpus(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_corpus: cannot open " + path);
  std::vector<CorpusTriple> out;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("load_corpus: parse error at line " + std::to_string(lineno) +
                               ": " + e.what());
    }
    CorpusTriple t;
    t.response = j.at("response").get<std::string>();
    t.label = j.at("label").get<std::string>();
    t.expected = j.at("expected").get<int>();
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace rlvr
