#pragma once

#include <array>
#include <charconv>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>

namespace vibesense {

// Error hierarchy. Every failure raised by the library derives from Error so
// callers can catch broadly and still branch on the concrete kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define VIBESENSE_DEFINE_ERROR(Name)          \
  class Name : public Error {                 \
   public:                                    \
    using Error::Error;                       \
  }

VIBESENSE_DEFINE_ERROR(InvalidSignalError);
VIBESENSE_DEFINE_ERROR(ProfileRangeError);
VIBESENSE_DEFINE_ERROR(InsufficientDataError);
VIBESENSE_DEFINE_ERROR(UndefinedCorrelationError);
VIBESENSE_DEFINE_ERROR(StratificationError);
VIBESENSE_DEFINE_ERROR(DegenerateFitError);
VIBESENSE_DEFINE_ERROR(ShapeError);
VIBESENSE_DEFINE_ERROR(DivergenceError);
VIBESENSE_DEFINE_ERROR(SchemaError);
VIBESENSE_DEFINE_ERROR(IoError);
VIBESENSE_DEFINE_ERROR(ConfigError);

#undef VIBESENSE_DEFINE_ERROR

enum class StructureClass : int {
  Building = 0,
  Flyover = 1,
  Railline = 2,
  SteelOverbridge = 3,
  ConcreteOverbridge = 4,
};

inline constexpr int kNumClasses = 5;

inline constexpr std::array<StructureClass, kNumClasses> kAllClasses = {
    StructureClass::Building, StructureClass::Flyover, StructureClass::Railline,
    StructureClass::SteelOverbridge, StructureClass::ConcreteOverbridge};

constexpr int class_index(StructureClass c) { return static_cast<int>(c); }

inline StructureClass class_from_index(int i) {
  if (i < 0 || i >= kNumClasses) {
    throw ConfigError("class index out of range: " + std::to_string(i));
  }
  return static_cast<StructureClass>(i);
}

/// Machine identifier used in files and on the wire (snake_case).
constexpr std::string_view class_id(StructureClass c) {
  switch (c) {
    case StructureClass::Building: return "building";
    case StructureClass::Flyover: return "flyover";
    case StructureClass::Railline: return "railline";
    case StructureClass::SteelOverbridge: return "steel_overbridge";
    case StructureClass::ConcreteOverbridge: return "concrete_overbridge";
  }
  return "unknown";
}

/// Human-readable name as printed in the dataset table.
constexpr std::string_view class_display_name(StructureClass c) {
  switch (c) {
    case StructureClass::Building: return "Building";
    case StructureClass::Flyover: return "Flyover";
    case StructureClass::Railline: return "Railline";
    case StructureClass::SteelOverbridge: return "Steel overbridge";
    case StructureClass::ConcreteOverbridge: return "Concrete overbridge";
  }
  return "Unknown";
}

/// Accepts either the machine id or the display name, case-sensitive.
inline std::optional<StructureClass> parse_class(std::string_view s) {
  for (auto c : kAllClasses) {
    if (s == class_id(c) || s == class_display_name(c)) return c;
  }
  return std::nullopt;
}

enum class Orientation { Vertical, Horizontal };

constexpr char orientation_code(Orientation o) {
  return o == Orientation::Vertical ? 'v' : 'h';
}

inline std::optional<Orientation> parse_orientation(std::string_view s) {
  if (s == "v" || s == "vertical") return Orientation::Vertical;
  if (s == "h" || s == "horizontal") return Orientation::Horizontal;
  return std::nullopt;
}

/// Shortest round-trip decimal representation of a double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) return std::to_string(v);
  return std::string(buf.data(), ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw SchemaError("not a number: '" + std::string(s) + "'");
  }
  return v;
}

inline std::int64_t parse_int(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    throw SchemaError("not an integer: '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace vibesense
