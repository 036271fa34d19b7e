#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace boardcast::csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const;  // -1 if absent
};

/// Reads a comma-separated file. Fields are plain (no quoting); every row
/// must have the header's arity.
Table read_file(const std::filesystem::path& path);

/// Parses CSV text (same rules as read_file). `origin` names the source in
/// error messages.
Table parse(const std::string& text, const std::string& origin);

class Writer {
 public:
  explicit Writer(std::vector<std::string> header);

  void add_row(std::vector<std::string> row);
  std::string str() const;
  void write_file(const std::filesystem::path& path) const;

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace boardcast::csv
