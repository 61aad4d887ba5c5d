#pragma once

#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

namespace imap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Entry point of the `imap` binary. Analysis results go to files; `out`
// receives a one-line JSON summary, `err` diagnostics.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string_view>& args, std::ostream& out, std::ostream& err);

// Timestep selectors: "default", "all", "A..B" (inclusive), or "t1,t2,...".
bool timestep_selector_valid(std::string_view selector);
std::vector<int> resolve_timesteps(std::string_view selector, const std::vector<int>& available);

}  // namespace imap::cli
