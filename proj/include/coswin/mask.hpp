#pragma once

#include <cstdint>
#include <vector>

#include "coswin/common.hpp"

namespace coswin {

struct BinaryMask {
  Shape shape;
  std::vector<uint8_t> data;  // strictly 0/1

  BinaryMask() = default;
  BinaryMask(Shape s, uint8_t fill = 0)
      : shape(std::move(s)), data(static_cast<size_t>(numel(shape)), fill) {}

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int64_t count_ones() const {
    int64_t n = 0;
    for (uint8_t v : data) n += v;
    return n;
  }
  bool operator==(const BinaryMask& o) const { return shape == o.shape && data == o.data; }
};

}  // namespace coswin
