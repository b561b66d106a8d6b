#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cellloc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;     ///< bad arguments or config
inline constexpr int kExitData = 3;      ///< input data failed validation
inline constexpr int kExitInternal = 4;  ///< internal invariant violated

/// Default data directory when --data is not given.
inline constexpr const char* kDataDirEnv = "CELLLOC_DATA_DIR";

extern const char* const kToolVersion;

/// Entry point shared by the executable and the tests. `args[0]` is the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace cellloc::cli
