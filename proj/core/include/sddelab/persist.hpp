#pragma once
#include <filesystem>
#include <string>
#include <vector>

namespace sddelab {

// Numeric table with a one-line header. All cells are doubles; formatting is
// fixed at %.17g so reruns with the same seed produce byte-identical files.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

void write_csv(const std::filesystem::path& path, const CsvTable& table);
CsvTable read_csv(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& content);

// Per-item outcome of an experiment or acceptance check. status uses the
// process exit convention: 0 pass, 2 fail, 3 inconclusive.
struct ReportItem {
  std::string name;
  int status = 0;
  std::string detail;
};

// Worst status wins: any fail -> 2, else any inconclusive -> 3, else 0.
int aggregate_status(const std::vector<ReportItem>& items);

// Renders report.txt (one line per item, "ALL PASS" summary when everything
// passed) and results.csv (name, status) into the given directory.
void emit_report(const std::filesystem::path& dir, const std::vector<ReportItem>& items);

// Scratch directory handling for experiment output: artifacts are written
// into a ".tmp" sibling and renamed into place at the end, so an interrupted
// run never leaves a partial directory under the final name.
class RunDir {
 public:
  RunDir(const std::filesystem::path& parent, const std::string& label);
  ~RunDir();
  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;

  const std::filesystem::path& path() const { return tmp_; }
  // Renames the scratch directory to its final name and returns it.
  std::filesystem::path commit();

 private:
  std::filesystem::path tmp_;
  std::filesystem::path final_;
  bool committed_ = false;
};

// UTC timestamp like 20260814T093055, used only in directory names (file
// contents stay timestamp-free to keep reruns byte-identical).
std::string utc_timestamp();

}  // namespace sddelab
