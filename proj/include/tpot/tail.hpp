#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace tpot {

enum class Tail : std::uint8_t { left = 0, right = 1 };

inline constexpr std::array<Tail, 2> kTails{Tail::left, Tail::right};

constexpr std::size_t index(Tail tail) { return static_cast<std::size_t>(tail); }

constexpr Tail other(Tail tail) { return tail == Tail::left ? Tail::right : Tail::left; }

/// -1 for the left tail, +1 for the right tail.
constexpr double sign(Tail tail) { return tail == Tail::left ? -1.0 : 1.0; }

inline std::string_view to_string(Tail tail) { return tail == Tail::left ? "left" : "right"; }

inline Tail parse_tail(std::string_view s) {
  if (s == "left") return Tail::left;
  if (s == "right") return Tail::right;
  throw std::invalid_argument("unknown tail '" + std::string(s) + "'");
}

/// A value held separately for the left and right tail.
template <class T>
struct PerTail {
  T left{};
  T right{};

  constexpr T& operator[](Tail tail) { return tail == Tail::left ? left : right; }
  constexpr const T& operator[](Tail tail) const { return tail == Tail::left ? left : right; }

  friend constexpr bool operator==(const PerTail&, const PerTail&) = default;
};

using TailPair = PerTail<double>;

}  // namespace tpot
