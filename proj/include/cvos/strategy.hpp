#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cvos {

// Which earlier frames condition the prediction of frame t.
//   first       {1}
//   prev        {t-1}
//   first_prev  {1, t-1}
//   mem         {1} plus every frame s with (s-1) mod stride == 0
enum class RefStrategy { first, prev, first_prev, mem };

RefStrategy parse_strategy(std::string_view name);
std::string to_string(RefStrategy s);

// 0-based frame indices (ascending, unique) feeding the prediction of 0-based
// frame t >= 1.
std::vector<int> reference_indices(RefStrategy s, int t, int mem_stride);

// True when frame t (0-based) is written to long-term memory under `mem`.
bool is_memory_frame(int t, int mem_stride);

}  // namespace cvos
