#include "bench/compare.hpp"

#include <algorithm>
#include <charconv>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include "bench/csv.hpp"

namespace seqpen::bench {

namespace {

struct Run {
  std::string dir;
  std::map<std::string, std::string> manifest;
  CsvTable results{{"-"}};
  std::vector<std::string> row;
};

std::map<std::string, std::string> read_manifest(const std::string& path) {
  std::map<std::string, std::string> out;
  std::istringstream in(read_text_file(path));
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

int method_rank(const std::string& m) {
  if (m == "objective_only") return 0;
  if (m == "fixed") return 1;
  return 2;
}

// Hyperparameters that distinguish runs, in sort priority.
const std::vector<std::string> kHyper = {"lambda", "penalty", "tau0",  "gamma",
                                         "epochs_per_update", "theta", "seed"};

std::string hyper_label(const Run& r) {
  std::string out;
  for (const auto& k : kHyper) {
    const auto it = r.manifest.find("config." + k);
    if (it == r.manifest.end()) continue;
    if (!out.empty()) out += ' ';
    out += k + "=" + it->second;
  }
  return out.empty() ? "-" : out;
}

bool value_less(const std::string& a, const std::string& b) {
  double x = 0, y = 0;
  const bool na = std::from_chars(a.data(), a.data() + a.size(), x).ec == std::errc();
  const bool nb = std::from_chars(b.data(), b.data() + b.size(), y).ec == std::errc();
  if (na && nb && x != y) return x < y;
  return a < b;
}

bool run_less(const Run& a, const Run& b) {
  const int ma = method_rank(a.manifest.at("method"));
  const int mb = method_rank(b.manifest.at("method"));
  if (ma != mb) return ma < mb;
  for (const auto& k : kHyper) {
    const auto ia = a.manifest.find("config." + k);
    const auto ib = b.manifest.find("config." + k);
    const std::string va = ia == a.manifest.end() ? "" : ia->second;
    const std::string vb = ib == b.manifest.end() ? "" : ib->second;
    if (va != vb) return value_less(va, vb);
  }
  return a.dir < b.dir;
}

}  // namespace

void compare_runs(const std::vector<std::string>& dirs, const std::string& split, std::ostream& out) {
  if (dirs.empty()) throw std::runtime_error("compare: no run directories given");
  std::vector<Run> runs;
  for (const auto& d : dirs) {
    Run r;
    r.dir = d;
    r.manifest = read_manifest(d + "/manifest.txt");
    for (const char* key : {"task", "method"}) {
      if (!r.manifest.count(key)) {
        throw std::runtime_error("compare: " + d + "/manifest.txt lacks '" + key + "'");
      }
    }
    r.results = read_csv(d + "/results.csv");
    runs.push_back(std::move(r));
  }

  std::vector<std::string> tasks;
  std::vector<std::string> schema_bad;
  for (const auto& r : runs) {
    if (std::find(tasks.begin(), tasks.end(), r.manifest.at("task")) == tasks.end()) {
      tasks.push_back(r.manifest.at("task"));
    }
    if (r.results.header() != runs.front().results.header()) schema_bad.push_back(r.dir);
  }
  if (tasks.size() > 1) {
    std::string msg = "compare: runs mix tasks:";
    for (const auto& r : runs) msg += "\n  " + r.dir + " (task=" + r.manifest.at("task") + ")";
    throw std::runtime_error(msg);
  }
  if (!schema_bad.empty()) {
    std::string msg = "compare: results.csv columns differ from " + runs.front().dir +
                      "/results.csv in:";
    for (const auto& d : schema_bad) msg += "\n  " + d + "/results.csv";
    throw std::runtime_error(msg);
  }

  const auto& header = runs.front().results.header();
  for (auto& r : runs) {
    for (const auto& row : r.results.rows()) {
      if (!row.empty() && row[0] == split) r.row = row;
    }
    if (r.row.empty()) {
      throw std::runtime_error("compare: " + r.dir + "/results.csv has no '" + split + "' row");
    }
  }
  std::stable_sort(runs.begin(), runs.end(), run_less);

  std::vector<std::vector<std::string>> table;
  std::vector<std::string> head = {"run", "method", "hyperparameters"};
  head.insert(head.end(), header.begin(), header.end());
  table.push_back(head);
  for (const auto& r : runs) {
    std::vector<std::string> cells = {r.dir, r.manifest.at("method"), hyper_label(r)};
    cells.insert(cells.end(), r.row.begin(), r.row.end());
    table.push_back(cells);
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : table) {
    for (std::size_t i = 0; i < row.size(); ++i) width[i] = std::max(width[i], row[i].size());
  }
  for (const auto& row : table) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << std::left << std::setw(static_cast<int>(width[i])) << row[i];
      out << (i + 1 < row.size() ? "  " : "\n");
    }
  }
}

}  // namespace seqpen::bench
