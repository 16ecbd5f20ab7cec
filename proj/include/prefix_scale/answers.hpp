#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <optional>
#include <string>
#include <vector>

#include "prefix_scale/common.hpp"

namespace pscale {

// ============================================================================
// Answer extraction, normalization, and voting
// ============================================================================
//
// Grading is exact: numeric answers become arbitrary-precision rationals in
// lowest terms, so "0.5" and "\frac{1}{2}" compare equal with no epsilon.
// Anything that is not a recognizable number becomes whitespace-collapsed
// symbolic text compared verbatim (no computer algebra).

enum class AnswerKind { Rational, DecimalRational, SymbolicText };

struct CanonicalAnswer {
  AnswerKind kind = AnswerKind::SymbolicText;
  boost::multiprecision::cpp_int numerator = 0;
  boost::multiprecision::cpp_int denominator = 1;  // > 0, lowest terms
  std::string text;  // symbolic form

  bool is_numeric() const { return kind != AnswerKind::SymbolicText; }
  std::string to_string() const;

  /// Numeric kinds compare by value (a decimal and a fraction with the same
  /// value are equal); symbolic compares by text.
  friend bool operator==(const CanonicalAnswer& a, const CanonicalAnswer& b) {
    if (a.is_numeric() != b.is_numeric()) return false;
    if (a.is_numeric()) {
      return a.numerator == b.numerator && a.denominator == b.denominator;
    }
    return a.text == b.text;
  }
};

struct ExtractResult {
  std::optional<std::string> raw;
  /// Set when a boxed expression had unbalanced braces and the numeric
  /// fallback was used instead.
  bool parse_warning = false;
};

/// Returns the contents of the last \boxed{...} (balanced braces, escaped
/// braces skipped); failing that, the last standalone numeric literal; absent
/// when neither exists. Never throws, whatever the input bytes.
ExtractResult extract_answer(const std::string& text);

/// Strips whitespace, \left/\right, $, trailing percent signs, and
/// thousands-commas, then parses fractions (\frac{a}{b}, a/b), integers, and
/// finite decimals into exact rationals. Everything else becomes symbolic
/// text with collapsed whitespace. Throws ParseError when nothing remains
/// after stripping.
CanonicalAnswer normalize(const std::string& raw);

/// Exact equivalence of two raw answers. Errors from normalize propagate.
bool equivalent(const std::string& a, const std::string& b);

struct VoteClass {
  std::string representative_raw;  // first raw answer seen in this class
  int count = 0;
  int first_index = 0;  // position of the class's first member
  bool absent = false;  // unparseable / missing answers
};

struct VoteResult {
  /// Raw answer of the winning class; absent only when every entry is absent.
  std::optional<std::string> winner;
  std::vector<VoteClass> classes;  // in order of first occurrence
};

/// Groups answers by `equivalent` and returns the plurality class, ties
/// broken by earliest first occurrence. Missing or unparseable entries form
/// one "absent" class that can never win unless every entry is absent.
VoteResult majority_vote(const std::vector<std::optional<std::string>>& raws);

}  // namespace pscale
