#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsdpg/agent.hpp"

namespace dsdpg::config {

// Plain hierarchical "section.key = value" text format; '#' starts a comment.
// Unknown keys are rejected by name; parse -> serialize -> parse is identity.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::string serialize_kv(const std::map<std::string, std::string>& kv);

struct ExperimentConfig {
  // env
  std::string env_name = "toy";
  int env_bonus_sites = 3;

  agent::AgentConfig agent;

  // run orchestration
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  std::string output_dir = "out";
  int jobs = 1;

  static ExperimentConfig from_kv(const std::map<std::string, std::string>& kv);
  static ExperimentConfig from_file(const std::string& path);
  std::map<std::string, std::string> to_kv() const;
  void save(const std::string& path) const;
};

}  // namespace dsdpg::config
