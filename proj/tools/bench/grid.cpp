#include "bench/grid.hpp"

#include <glob.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <iostream>
#include <map>
#include <vector>

#include "bench/config.hpp"
#include "bench/experiment.hpp"

extern char** environ;

namespace seqpen::bench {

namespace {

std::vector<std::string> expand(const std::string& pattern) {
  glob_t g{};
  const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
  std::vector<std::string> out;
  if (rc == 0) out.assign(g.gl_pathv, g.gl_pathv + g.gl_pathc);
  globfree(&g);
  return out;  // glob(3) returns paths sorted
}

pid_t spawn_run(const std::string& config, const std::string& out) {
  std::vector<std::string> args = {"seqpen_bench", "run", config, "--out", out};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  const int rc = posix_spawn(&pid, "/proc/self/exe", nullptr, nullptr, argv.data(), environ);
  if (rc != 0) {
    std::cerr << "grid: cannot spawn worker for " << config << ": " << std::strerror(rc) << "\n";
    return -1;
  }
  return pid;
}

}  // namespace

int run_grid(const std::string& pattern, int jobs) {
  const std::vector<std::string> configs = expand(pattern);
  if (configs.empty()) {
    std::cerr << "grid: no config matches '" << pattern << "'\n";
    return kExitConfig;
  }

  std::vector<std::string> outs;
  std::map<std::string, std::string> owner;
  bool bad = false;
  for (const auto& path : configs) {
    try {
      const ExperimentConfig cfg = load_config(path);
      const std::string out = resolve_output_dir(cfg, path, std::nullopt);
      if (auto it = owner.find(out); it != owner.end()) {
        std::cerr << "grid: " << path << " and " << it->second << " both write to " << out << "\n";
        bad = true;
      }
      owner.emplace(out, path);
      outs.push_back(out);
    } catch (const ConfigError& e) {
      std::cerr << e.what() << "\n";
      bad = true;
    }
  }
  if (bad) return kExitConfig;

  jobs = std::max(jobs, 1);
  std::map<pid_t, std::size_t> running;
  std::vector<int> codes(configs.size(), kExitFailure);
  std::size_t next = 0;
  while (next < configs.size() || !running.empty()) {
    while (next < configs.size() && static_cast<int>(running.size()) < jobs) {
      const pid_t pid = spawn_run(configs[next], outs[next]);
      if (pid > 0) running[pid] = next;
      ++next;
    }
    if (running.empty()) continue;
    int status = 0;
    const pid_t done = ::waitpid(-1, &status, 0);
    if (done < 0) break;
    const auto it = running.find(done);
    if (it == running.end()) continue;
    codes[it->second] = WIFEXITED(status) ? WEXITSTATUS(status) : kExitFailure;
    std::cerr << "grid: " << configs[it->second] << " -> " << outs[it->second] << " (exit "
              << codes[it->second] << ")\n";
    running.erase(it);
  }
  return *std::max_element(codes.begin(), codes.end());
}

}  // namespace seqpen::bench
