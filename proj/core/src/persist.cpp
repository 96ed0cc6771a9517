#include "sddelab/persist.hpp"

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "sddelab/errors.hpp"

namespace sddelab {

namespace fs = std::filesystem;

void write_csv(const fs::path& path, const CsvTable& table) {
  std::ostringstream out;
  for (std::size_t i = 0; i < table.header.size(); ++i) {
    if (i) out << ',';
    out << table.header[i];
  }
  out << '\n';
  char buf[40];
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size())
      throw DimensionMismatch("write_csv: row width does not match header");
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out << ',';
      std::snprintf(buf, sizeof buf, "%.17g", row[i]);
      out << buf;
    }
    out << '\n';
  }
  write_text_file(path, out.str());
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("read_csv: cannot open " + path.string());
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw ConfigInvalid("read_csv: empty file " + path.string());
  std::stringstream hs(line);
  std::string cell;
  while (std::getline(hs, cell, ',')) table.header.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream rs(line);
    while (std::getline(rs, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw ConfigInvalid("read_csv: non-numeric cell in " + path.string());
      row.push_back(v);
    }
    if (row.size() != table.header.size())
      throw ConfigInvalid("read_csv: ragged row in " + path.string());
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigInvalid("cannot open for writing: " + path.string());
  out << content;
  out.flush();
  if (!out) throw ConfigInvalid("write failed: " + path.string());
}

int aggregate_status(const std::vector<ReportItem>& items) {
  int status = 0;
  for (const auto& it : items) {
    if (it.status == 2) return 2;
    if (it.status == 3) status = 3;
  }
  return status;
}

void emit_report(const fs::path& dir, const std::vector<ReportItem>& items) {
  if (items.empty()) throw ConfigInvalid("emit_report: no results to report");
  std::ostringstream rep;
  int n_pass = 0;
  for (const auto& it : items) {
    const char* tag = it.status == 0 ? "PASS" : (it.status == 3 ? "INCONCLUSIVE" : "FAIL");
    if (it.status == 0) ++n_pass;
    rep << tag << "  " << it.name;
    if (!it.detail.empty()) rep << "  [" << it.detail << "]";
    rep << '\n';
  }
  if (n_pass == static_cast<int>(items.size()))
    rep << "ALL PASS (" << items.size() << " checks)\n";
  else
    rep << n_pass << "/" << items.size() << " passed\n";
  write_text_file(dir / "report.txt", rep.str());

  CsvTable table;
  table.header = {"item", "status"};
  std::ostringstream names;
  // results.csv keeps numeric cells only; item order mirrors report.txt and
  // the name list is stored alongside in names.txt for grep-friendliness.
  for (std::size_t i = 0; i < items.size(); ++i) {
    table.rows.push_back({static_cast<double>(i), static_cast<double>(items[i].status)});
    names << i << "  " << items[i].name << '\n';
  }
  write_csv(dir / "results.csv", table);
  write_text_file(dir / "names.txt", names.str());
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%S", &tm);
  return buf;
}

RunDir::RunDir(const fs::path& parent, const std::string& label) {
  fs::create_directories(parent);
  const std::string stamp = utc_timestamp();
  for (int salt = 0;; ++salt) {
    fs::path base = parent / (label + "-" + stamp + (salt ? "-" + std::to_string(salt) : ""));
    fs::path tmp = base;
    tmp += ".tmp";
    if (!fs::exists(tmp) && !fs::exists(base)) {
      tmp_ = tmp;
      final_ = base;
      break;
    }
    if (salt > 1000) throw ConfigInvalid("RunDir: cannot find a free directory name");
  }
  fs::create_directory(tmp_);
}

RunDir::~RunDir() {
  if (!committed_) {
    std::error_code ec;
    fs::remove_all(tmp_, ec);  // best effort; failed runs leave nothing behind
  }
}

std::filesystem::path RunDir::commit() {
  fs::rename(tmp_, final_);
  committed_ = true;
  return final_;
}

}  // namespace sddelab
