#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

// Randomized exactness checks behind `exion oracle`.
namespace exion::bench {

struct OracleCheck {
  std::string name;
  std::size_t instances = 0;
  std::size_t failures = 0;
  std::string first_failure;
};

struct OracleSummary {
  uint64_t seed = 0;
  std::vector<OracleCheck> checks;

  bool ok() const noexcept;
};

OracleSummary run_oracles(uint64_t seed, std::size_t instances);
std::string oracle_json(const OracleSummary& s);

}  // namespace exion::bench
