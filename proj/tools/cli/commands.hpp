#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace gkv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitBadInput = 1;
inline constexpr int kExitInternal = 2;

inline constexpr const char* kGenerateSchema = "gkv.generate.v1";

// Entry point shared by the gkv binary and the tests. args[0] is the program
// name. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err);

// 42 unless GKV_SEED holds an unsigned integer.
std::uint64_t default_seed();

}  // namespace gkv::cli
