#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "popscope/app.hpp"

namespace popscope {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomainError = 1;
inline constexpr int kExitUsage = 2;

struct CliEnvironment {
  std::shared_ptr<Transport> transport;  // null: HTTP when not replaying
  Clock clock = system_now;
};

/// Runs one `popscope` invocation. argv[0] is the program name.
int cli_dispatch(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err,
                 const CliEnvironment& env = {});

}  // namespace popscope
