#include "prefix_scale/answers.hpp"

#include <algorithm>
#include <cctype>

namespace pscale {

using boost::multiprecision::cpp_int;

std::string CanonicalAnswer::to_string() const {
  if (!is_numeric()) return text;
  if (denominator == 1) return numerator.str();
  return numerator.str() + "/" + denominator.str();
}

// ============================================================================
// Extraction
// ============================================================================

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// Balanced-brace scan starting at the '{'. Escaped braces (\{ \}) do not
// affect depth. Returns the contents, or nullopt if the group never closes.
std::optional<std::string> balanced_group(const std::string& text,
                                          size_t open_brace) {
  int depth = 0;
  for (size_t i = open_brace; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\\' && i + 1 < text.size() &&
        (text[i + 1] == '{' || text[i + 1] == '}')) {
      ++i;
      continue;
    }
    if (c == '{') ++depth;
    if (c == '}') {
      --depth;
      if (depth == 0) {
        return text.substr(open_brace + 1, i - open_brace - 1);
      }
    }
  }
  return std::nullopt;
}

// Last occurrence of "\boxed" that is followed (after optional whitespace)
// by an opening brace. Returns the index of that brace.
std::optional<size_t> last_boxed_brace(const std::string& text) {
  const std::string marker = "\\boxed";
  size_t search_end = text.size();
  while (true) {
    const size_t pos = text.rfind(marker, search_end);
    if (pos == std::string::npos) return std::nullopt;
    size_t i = pos + marker.size();
    while (i < text.size() &&
           std::isspace(static_cast<unsigned char>(text[i]))) {
      ++i;
    }
    if (i < text.size() && text[i] == '{') return i;
    if (pos == 0) return std::nullopt;
    search_end = pos - 1;
  }
}

// Last standalone numeric literal: digits with optional sign, thousands
// commas and decimal part, not glued to a word or another number.
std::optional<std::string> last_numeric_literal(const std::string& text) {
  std::optional<std::string> last;
  const size_t n = text.size();
  size_t i = 0;
  while (i < n) {
    const char prev = i > 0 ? text[i - 1] : ' ';
    if (is_word_char(prev) || prev == '.') {
      ++i;
      continue;
    }
    size_t j = i;
    if (j < n && (text[j] == '-' || text[j] == '+')) ++j;
    bool any_digit = false;
    while (j < n && is_digit(text[j])) {
      ++j;
      any_digit = true;
    }
    if (any_digit) {
      // Thousands groups: a comma followed by three digits.
      while (j + 3 < n && text[j] == ',' && is_digit(text[j + 1]) &&
             is_digit(text[j + 2]) && is_digit(text[j + 3])) {
        j += 4;
      }
    }
    if (j < n && text[j] == '.' && j + 1 < n && is_digit(text[j + 1])) {
      ++j;
      while (j < n && is_digit(text[j])) ++j;
      any_digit = true;
    }
    if (any_digit) {
      last = text.substr(i, j - i);
      i = j;
    } else {
      ++i;
    }
  }
  return last;
}

}  // namespace

ExtractResult extract_answer(const std::string& text) {
  ExtractResult result;
  if (const auto brace = last_boxed_brace(text)) {
    if (auto contents = balanced_group(text, *brace)) {
      result.raw = std::move(*contents);
      return result;
    }
    result.parse_warning = true;  // unbalanced boxed, fall through
  }
  result.raw = last_numeric_literal(text);
  return result;
}

// ============================================================================
// Normalization
// ============================================================================

namespace {

void erase_all(std::string& s, const std::string& what) {
  size_t pos = 0;
  while ((pos = s.find(what, pos)) != std::string::npos) {
    s.erase(pos, what.size());
  }
}

std::string trim(const std::string& s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string collapse_whitespace(const std::string& s) {
  std::string out;
  bool in_space = false;
  for (char c : trim(s)) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty()) out += ' ';
    in_space = false;
    out += c;
  }
  return out;
}

// Integer with optional sign; entire string must be consumed.
std::optional<cpp_int> parse_integer(const std::string& s) {
  if (s.empty()) return std::nullopt;
  size_t i = 0;
  bool negative = false;
  if (s[i] == '+' || s[i] == '-') {
    negative = s[i] == '-';
    ++i;
  }
  if (i == s.size()) return std::nullopt;
  cpp_int value = 0;
  for (; i < s.size(); ++i) {
    if (!is_digit(s[i])) return std::nullopt;
    value = value * 10 + (s[i] - '0');
  }
  return negative ? -value : value;
}

struct Rational {
  cpp_int num;
  cpp_int den;
};

void reduce(Rational& r) {
  if (r.den < 0) {
    r.num = -r.num;
    r.den = -r.den;
  }
  cpp_int g = boost::multiprecision::gcd(r.num < 0 ? -r.num : r.num, r.den);
  if (g > 1) {
    r.num /= g;
    r.den /= g;
  }
}

// Finite decimal: [sign] digits [. digits] | [sign] . digits (exact
// conversion, no floating point). Returns nullopt if the string has no '.'
// or is not a plain decimal.
std::optional<Rational> parse_decimal(const std::string& s) {
  if (s.find('.') == std::string::npos) return std::nullopt;
  size_t i = 0;
  bool negative = false;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
    negative = s[i] == '-';
    ++i;
  }
  cpp_int digits = 0;
  int frac_len = 0;
  bool seen_digit = false;
  bool seen_dot = false;
  for (; i < s.size(); ++i) {
    if (s[i] == '.') {
      if (seen_dot) return std::nullopt;
      seen_dot = true;
      continue;
    }
    if (!is_digit(s[i])) return std::nullopt;
    digits = digits * 10 + (s[i] - '0');
    seen_digit = true;
    if (seen_dot) ++frac_len;
  }
  if (!seen_digit) return std::nullopt;
  Rational r{negative ? -digits : digits, 1};
  for (int k = 0; k < frac_len; ++k) r.den *= 10;
  reduce(r);
  return r;
}

// \frac{a}{b} (also \dfrac, \tfrac) with integer parts and an optional
// leading sign.
std::optional<Rational> parse_latex_fraction(const std::string& s) {
  size_t i = 0;
  bool negative = false;
  if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
    negative = s[i] == '-';
    ++i;
  }
  bool matched = false;
  for (const std::string name : {"\\frac", "\\dfrac", "\\tfrac"}) {
    if (s.compare(i, name.size(), name) == 0) {
      i += name.size();
      matched = true;
      break;
    }
  }
  if (!matched) return std::nullopt;
  if (i >= s.size() || s[i] != '{') return std::nullopt;
  const auto numerator = balanced_group(s, i);
  if (!numerator) return std::nullopt;
  i += numerator->size() + 2;
  if (i >= s.size() || s[i] != '{') return std::nullopt;
  const auto denominator = balanced_group(s, i);
  if (!denominator) return std::nullopt;
  if (i + denominator->size() + 2 != s.size()) return std::nullopt;

  const auto a = parse_integer(trim(*numerator));
  const auto b = parse_integer(trim(*denominator));
  if (!a || !b || *b == 0) return std::nullopt;
  Rational r{negative ? -*a : *a, *b};
  reduce(r);
  return r;
}

// a/b with integer parts.
std::optional<Rational> parse_slash_fraction(const std::string& s) {
  const size_t slash = s.find('/');
  if (slash == std::string::npos || s.find('/', slash + 1) != std::string::npos) {
    return std::nullopt;
  }
  const auto a = parse_integer(trim(s.substr(0, slash)));
  const auto b = parse_integer(trim(s.substr(slash + 1)));
  if (!a || !b || *b == 0) return std::nullopt;
  Rational r{*a, *b};
  reduce(r);
  return r;
}

// Drops a thousands-separating comma: between digits only.
std::string strip_thousands_commas(const std::string& s) {
  std::string out;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == ',' && i > 0 && i + 1 < s.size() && is_digit(s[i - 1]) &&
        is_digit(s[i + 1])) {
      continue;
    }
    out += s[i];
  }
  return out;
}

}  // namespace

CanonicalAnswer normalize(const std::string& raw) {
  std::string s = raw;
  erase_all(s, "\\left");
  erase_all(s, "\\right");
  erase_all(s, "$");
  s = trim(s);
  // Trailing percent (both LaTeX and plain).
  if (s.size() >= 2 && s.compare(s.size() - 2, 2, "\\%") == 0) {
    s.erase(s.size() - 2);
  } else if (!s.empty() && s.back() == '%') {
    s.pop_back();
  }
  s = strip_thousands_commas(trim(s));
  s = trim(s);
  if (s.empty()) throw ParseError("normalize: empty answer after stripping");

  CanonicalAnswer out;
  if (auto frac = parse_latex_fraction(s)) {
    out.kind = AnswerKind::Rational;
    out.numerator = frac->num;
    out.denominator = frac->den;
    return out;
  }
  if (auto frac = parse_slash_fraction(s)) {
    out.kind = AnswerKind::Rational;
    out.numerator = frac->num;
    out.denominator = frac->den;
    return out;
  }
  if (auto integer = parse_integer(s)) {
    out.kind = AnswerKind::Rational;
    out.numerator = *integer;
    return out;
  }
  if (auto decimal = parse_decimal(s)) {
    out.kind = AnswerKind::DecimalRational;
    out.numerator = decimal->num;
    out.denominator = decimal->den;
    return out;
  }
  out.kind = AnswerKind::SymbolicText;
  out.text = collapse_whitespace(s);
  return out;
}

bool equivalent(const std::string& a, const std::string& b) {
  return normalize(a) == normalize(b);
}

VoteResult majority_vote(const std::vector<std::optional<std::string>>& raws) {
  if (raws.empty()) {
    throw ValidationError("majority_vote: empty answer list");
  }
  struct Group {
    std::optional<CanonicalAnswer> canonical;  // nullopt = absent class
    VoteClass out;
  };
  std::vector<Group> groups;

  for (int i = 0; i < static_cast<int>(raws.size()); ++i) {
    std::optional<CanonicalAnswer> canonical;
    if (raws[i]) {
      try {
        canonical = normalize(*raws[i]);
      } catch (const ParseError&) {
        canonical = std::nullopt;
      }
    }
    Group* found = nullptr;
    for (Group& g : groups) {
      const bool both_absent = !g.canonical && !canonical;
      const bool both_same =
          g.canonical && canonical && *g.canonical == *canonical;
      if (both_absent || both_same) {
        found = &g;
        break;
      }
    }
    if (!found) {
      Group g;
      g.canonical = canonical;
      g.out.representative_raw = canonical ? *raws[i] : "";
      g.out.absent = !canonical;
      g.out.first_index = i;
      groups.push_back(std::move(g));
      found = &groups.back();
    }
    found->out.count += 1;
  }

  VoteResult result;
  const Group* winner = nullptr;
  for (const Group& g : groups) {
    result.classes.push_back(g.out);
    if (g.out.absent) continue;  // absent answers never win
    if (!winner || g.out.count > winner->out.count) winner = &g;
  }
  if (winner) result.winner = winner->out.representative_raw;
  return result;
}

}  // namespace pscale
