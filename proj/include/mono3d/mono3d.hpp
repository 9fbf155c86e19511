#pragma once

// Convenience header pulling in the whole toolkit.

#include "mono3d/core.hpp"
#include "mono3d/geometry.hpp"
#include "mono3d/mgiou.hpp"
#include "mono3d/assign.hpp"
#include "mono3d/losses.hpp"
#include "mono3d/distill.hpp"
#include "mono3d/container.hpp"
#include "mono3d/nnforward.hpp"
#include "mono3d/infer.hpp"
#include "mono3d/eval.hpp"
#include "mono3d/kitti_io.hpp"
#include "mono3d/config.hpp"
#include "mono3d/synthgen.hpp"

namespace mono3d {
inline constexpr const char* kVersion = "0.1.0";
}  // namespace mono3d
