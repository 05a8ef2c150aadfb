#include "cvos/strategy.hpp"

#include <stdexcept>

namespace cvos {

RefStrategy parse_strategy(std::string_view name) {
  if (name == "first") return RefStrategy::first;
  if (name == "prev") return RefStrategy::prev;
  if (name == "first_prev") return RefStrategy::first_prev;
  if (name == "mem") return RefStrategy::mem;
  throw std::invalid_argument("unknown reference strategy '" + std::string(name) +
                              "' (expected first, prev, first_prev or mem)");
}

std::string to_string(RefStrategy s) {
  switch (s) {
    case RefStrategy::first: return "first";
    case RefStrategy::prev: return "prev";
    case RefStrategy::first_prev: return "first_prev";
    case RefStrategy::mem: return "mem";
  }
  return "first";
}

bool is_memory_frame(int t, int mem_stride) { return t > 0 && t % mem_stride == 0; }

std::vector<int> reference_indices(RefStrategy s, int t, int mem_stride) {
  if (t < 1) throw std::invalid_argument("reference_indices: t must be >= 1");
  if (mem_stride < 1) throw std::invalid_argument("reference_indices: mem_stride must be >= 1");
  switch (s) {
    case RefStrategy::first: return {0};
    case RefStrategy::prev: return {t - 1};
    case RefStrategy::first_prev:
      if (t == 1) return {0};
      return {0, t - 1};
    case RefStrategy::mem: {
      std::vector<int> out{0};
      for (int k = mem_stride; k < t; k += mem_stride) out.push_back(k);
      return out;
    }
  }
  return {0};
}

}  // namespace cvos
