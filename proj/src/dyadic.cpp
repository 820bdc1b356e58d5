#include "sflow/dyadic.hpp"

#include <cmath>
#include <limits>

#include "sflow/errors.hpp"

namespace sflow {

namespace {

// Shift with overflow detection.
std::int64_t scale_up(std::int64_t n, int shift) {
  if (shift == 0) return n;
  constexpr std::int64_t kMax = std::numeric_limits<std::int64_t>::max();
  if (shift >= 62 || (n >= 0 ? n > (kMax >> shift) : -n > (kMax >> shift))) {
    throw ResolutionError("dyadic time overflow at shift " + std::to_string(shift));
  }
  return n * (std::int64_t{1} << shift);
}

}  // namespace

DyadicTime::DyadicTime(std::int64_t numerator, int level) {
  if (level < 0 || level > kMaxLevel) {
    throw ResolutionError("dyadic level " + std::to_string(level) + " out of range");
  }
  while (level > 0 && (numerator % 2) == 0) {
    numerator /= 2;
    --level;
  }
  numerator_ = numerator;
  level_ = level;
}

DyadicTime DyadicTime::nearest(double t, int level) {
  const double scaled = std::ldexp(t, level);
  return DyadicTime(static_cast<std::int64_t>(std::floor(scaled + 0.5)), level);
}

std::int64_t DyadicTime::ticks(int level) const {
  if (level < level_) {
    throw AlignmentError("time " + str() + " is not on the level-" + std::to_string(level) +
                         " grid");
  }
  return scale_up(numerator_, level - level_);
}

double DyadicTime::to_double() const { return std::ldexp(static_cast<double>(numerator_), -level_); }

std::int64_t DyadicTime::floor_integer() const {
  if (level_ == 0) return numerator_;
  const std::int64_t d = std::int64_t{1} << level_;
  std::int64_t q = numerator_ / d;
  if (numerator_ % d != 0 && numerator_ < 0) --q;
  return q;
}

std::int64_t DyadicTime::ceil_integer() const {
  const std::int64_t f = floor_integer();
  return (level_ == 0) ? f : f + 1;
}

DyadicTime DyadicTime::operator+(const DyadicTime& o) const {
  const int l = std::max(level_, o.level_);
  return DyadicTime(ticks(l) + o.ticks(l), l);
}

DyadicTime DyadicTime::operator-(const DyadicTime& o) const {
  const int l = std::max(level_, o.level_);
  return DyadicTime(ticks(l) - o.ticks(l), l);
}

std::strong_ordering operator<=>(const DyadicTime& a, const DyadicTime& b) {
  const int l = std::max(a.level_, b.level_);
  return a.ticks(l) <=> b.ticks(l);
}

std::string DyadicTime::str() const {
  if (level_ == 0) return std::to_string(numerator_);
  return std::to_string(numerator_) + "/2^" + std::to_string(level_);
}

}  // namespace sflow
