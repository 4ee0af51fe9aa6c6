#pragma once

// Comma-separated tables with shortest round-trip decimal formatting, and an
// all-or-nothing writer for a set of output files.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "dwtraj/errors.hpp"

namespace dwtraj::csv {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ConfigError("malformed number '" + std::string(s) + "'");
  return v;
}

class TableBuilder {
 public:
  explicit TableBuilder(const std::vector<std::string>& header) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (i) out_ += ',';
      out_ += header[i];
    }
    out_ += '\n';
  }

  template <class... Cells>
  void row(const Cells&... cells) {
    bool first = true;
    ((append(cells, first)), ...);
    out_ += '\n';
  }

  std::string str() && { return std::move(out_); }
  const std::string& str() const& { return out_; }

 private:
  void append(double v, bool& first) { sep(first); out_ += format_double(v); }
  void append(int v, bool& first) { sep(first); out_ += std::to_string(v); }
  void append(std::size_t v, bool& first) { sep(first); out_ += std::to_string(v); }
  void append(char v, bool& first) { sep(first); out_ += v; }
  void append(const std::string& v, bool& first) { sep(first); out_ += v; }
  void sep(bool& first) {
    if (!first) out_ += ',';
    first = false;
  }

  std::string out_;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ConfigError("missing column '" + name + "'");
  }

  std::vector<double> numbers(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(parse_double(r.at(c)));
    return out;
  }
};

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open", path.string());
  Table t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty CSV file " + path.string());
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != t.header.size()) throw ConfigError("ragged row in " + path.string());
    t.rows.push_back(std::move(cells));
  }
  return t;
}

// Collects file contents and writes them together: everything goes to
// temporaries first, and either all files are renamed into place or none are.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string content) { files_.emplace_back(name, std::move(content)); }

  std::vector<std::filesystem::path> commit() {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create output directory", dir_.string());

    std::vector<fs::path> temps;
    auto cleanup = [&] {
      for (const auto& p : temps) fs::remove(p, ec);
    };
    for (const auto& [name, content] : files_) {
      const fs::path tmp = dir_ / (name + ".partial");
      temps.push_back(tmp);
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(content.data(), static_cast<std::streamsize>(content.size()));
      out.close();
      if (!out) {
        cleanup();
        throw IoError("cannot write", tmp.string());
      }
    }
    std::vector<fs::path> written;
    for (std::size_t i = 0; i < files_.size(); ++i) {
      const fs::path dst = dir_ / files_[i].first;
      fs::rename(temps[i], dst, ec);
      if (ec) {
        cleanup();
        for (const auto& p : written) fs::remove(p, ec);
        throw IoError("cannot move output into place", dst.string());
      }
      written.push_back(dst);
    }
    return written;
  }

 private:
  std::filesystem::path dir_;
  std::vector<std::pair<std::string, std::string>> files_;
};

}  // namespace dwtraj::csv
