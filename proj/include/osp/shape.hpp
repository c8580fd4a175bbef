#pragma once

#include <cstddef>
#include <string>

namespace osp {

/// Points are plain coordinate vectors (width = dimension); images are
/// channel-major [c][y][x] grids.
enum class InputKind { Points, Image };

struct InputShape {
  InputKind kind = InputKind::Points;
  int height = 1;
  int width = 2;
  int channels = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }

  static InputShape points(int dim) { return InputShape{InputKind::Points, 1, dim, 1}; }
  static InputShape image(int height, int width, int channels) {
    return InputShape{InputKind::Image, height, width, channels};
  }

  bool operator==(const InputShape&) const = default;
};

std::string to_string(const InputShape& shape);

} // namespace osp
