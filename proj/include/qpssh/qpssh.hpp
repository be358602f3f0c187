#pragma once

#include "qpssh/config.hpp"
#include "qpssh/localization.hpp"
#include "qpssh/model.hpp"
#include "qpssh/spectral.hpp"
#include "qpssh/sweep.hpp"
#include "qpssh/topology.hpp"

namespace qpssh {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qpssh
