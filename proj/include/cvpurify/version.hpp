#pragma once

#define CVPURIFY_VERSION_MAJOR 0
#define CVPURIFY_VERSION_MINOR 1
#define CVPURIFY_VERSION_PATCH 0

namespace cvpurify {

inline constexpr const char* version_string() { return "0.1.0"; }

}  // namespace cvpurify
