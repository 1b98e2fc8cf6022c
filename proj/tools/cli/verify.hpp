#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gkv::cli {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool all_passed() const;
  nlohmann::ordered_json to_json() const;
  std::string to_text() const;
};

// Oracle-equivalence and invariant checks on seeded random tiny models.
VerifyReport run_verify(std::uint64_t seed, unsigned workers = 2);

}  // namespace gkv::cli
