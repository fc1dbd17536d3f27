#pragma once

#include <mutex>

namespace sdcn::detail {

// FFTW's planner is not thread-safe; every plan creation and destruction holds this.
std::mutex& fftw_planner_mutex();

}  // namespace sdcn::detail
