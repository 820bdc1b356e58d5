#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace sflow {

/// A time value numerator * 2^-level, kept in canonical form (odd numerator
/// or level zero). Negative times are allowed.
class DyadicTime {
 public:
  static constexpr int kMaxLevel = 52;

  constexpr DyadicTime() = default;
  DyadicTime(std::int64_t numerator, int level);

  static DyadicTime integer(std::int64_t n) { return DyadicTime(n, 0); }

  /// Nearest grid point at `level` (ties toward +inf).
  static DyadicTime nearest(double t, int level);

  std::int64_t numerator() const { return numerator_; }
  int level() const { return level_; }

  /// Numerator of this time on the finer grid `level`; throws when the time
  /// is not representable there.
  std::int64_t ticks(int level) const;
  bool aligned_to(int level) const { return level_ <= level; }

  double to_double() const;
  std::int64_t floor_integer() const;
  std::int64_t ceil_integer() const;

  DyadicTime operator+(const DyadicTime& o) const;
  DyadicTime operator-(const DyadicTime& o) const;
  DyadicTime operator-() const { return DyadicTime(-numerator_, level_); }

  friend bool operator==(const DyadicTime& a, const DyadicTime& b) = default;
  friend std::strong_ordering operator<=>(const DyadicTime& a, const DyadicTime& b);

  std::string str() const;

 private:
  std::int64_t numerator_ = 0;
  int level_ = 0;
};

}  // namespace sflow
