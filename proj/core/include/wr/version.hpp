#pragma once

namespace wr {

inline constexpr const char* kVersion = "0.1.0";

// On-disk format tags. Bump only with a reader for the old revision.
inline constexpr const char* kFeatureMagic = "WRFEAT01";
inline constexpr const char* kCodebookFormat = "WRCB01";

}  // namespace wr
