#pragma once

#include <stdexcept>
#include <string>

namespace evo {

// Tensor extents or operand shapes do not line up.
class ShapeError : public std::invalid_argument {
 public:
  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}
};

// Operator parameters are inconsistent: missing payloads, bad divisibility,
// head/window counts that do not match the supplied weights.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

}  // namespace evo
