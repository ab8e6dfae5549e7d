// Copyright 2026 The cxrgaze Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iostream>
#include <string_view>

namespace cxrgaze::log {

enum class Level { quiet = 0, warn = 1, info = 2 };

inline Level& threshold() {
  static Level level = Level::info;
  return level;
}

inline void info(std::string_view msg) {
  if (threshold() >= Level::info) std::cerr << "INFO: " << msg << '\n';
}

inline void warn(std::string_view msg) {
  if (threshold() >= Level::warn) std::cerr << "WARNING: " << msg << '\n';
}

}  // namespace cxrgaze::log
