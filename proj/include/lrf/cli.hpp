#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lrf {

/// Runs one subcommand. Returns 0 on success, 1 on a domain error, 2 on a
/// usage error. Human summaries go to `out`, diagnostics to `err`.
int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_dispatch(int argc, char** argv);

} // namespace lrf
