#include "esbound/csv.hpp"

#include "esbound/core_model.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace esb::csv {

std::string fmt(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  std::string s(buf);
  if (s == "-0.000000") s = "0.000000";
  return s;
}

std::string quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

Writer& Writer::header(const std::vector<std::string>& names) {
  for (const auto& n : names) field(n);
  end_row();
  return *this;
}

Writer& Writer::field(const std::string& s) {
  if (row_started_) os_ << ',';
  os_ << quote(s);
  row_started_ = true;
  return *this;
}

Writer& Writer::field(double x) { return field(fmt(x)); }

Writer& Writer::field(long long x) { return field(std::to_string(x)); }

void Writer::end_row() {
  os_ << '\n';
  row_started_ = false;
}

namespace {

// Splits one logical record; handles quoted fields spanning lines.
bool next_record(std::istream& is, std::vector<std::string>& out) {
  out.clear();
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (is.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (is.peek() == '"') {
          is.get(c);
          field += '"';
        } else {
          in_quotes = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c == '\r') {
      continue;
    } else if (c == '\n') {
      out.push_back(field);
      return true;
    } else {
      field += c;
    }
  }
  if (any) out.push_back(field);
  return any;
}

double to_double(const std::string& s, const std::string& where) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw IoError("non-numeric value '" + s + "' at " + where);
  }
  while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  if (pos != s.size()) throw IoError("non-numeric value '" + s + "' at " + where);
  return v;
}

}  // namespace

Table parse_table(std::istream& is) {
  Table t;
  std::vector<std::string> rec;
  if (!next_record(is, t.header)) return t;
  while (next_record(is, rec)) {
    if (rec.size() == 1 && rec[0].empty()) continue;
    t.rows.push_back(rec);
  }
  return t;
}

Table read_table(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return parse_table(in);
}

Eigen::MatrixXd read_labeled_matrix(const std::string& path) {
  const Table t = read_table(path);
  if (t.header.size() < 2) throw IoError(path + ": expected a header with at least one column");
  const int cols = static_cast<int>(t.header.size()) - 1;
  Eigen::MatrixXd m(t.rows.size(), cols);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (static_cast<int>(t.rows[r].size()) != cols + 1)
      throw IoError(path + ": row " + std::to_string(r + 1) + " has wrong field count");
    for (int c = 0; c < cols; ++c)
      m(r, c) = to_double(t.rows[r][c + 1], path + " row " + std::to_string(r + 1) + " col " +
                                                std::to_string(c + 1));
  }
  return m;
}

void write_labeled_matrix(const std::string& path, const Eigen::MatrixXd& m,
                          const std::string& corner) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  Writer w(out);
  w.field(corner);
  for (int c = 0; c < m.cols(); ++c) w.field(c);
  w.end_row();
  for (int r = 0; r < m.rows(); ++r) {
    w.field(r);
    for (int c = 0; c < m.cols(); ++c) w.field(m(r, c));
    w.end_row();
  }
}

Eigen::MatrixXd read_matrix(const std::string& path) {
  const Table t = read_table(path);
  const int cols = static_cast<int>(t.header.size());
  Eigen::MatrixXd m(t.rows.size(), cols);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    if (static_cast<int>(t.rows[r].size()) != cols)
      throw IoError(path + ": row " + std::to_string(r + 1) + " has wrong field count");
    for (int c = 0; c < cols; ++c)
      m(r, c) = to_double(t.rows[r][c], path + " row " + std::to_string(r + 1));
  }
  return m;
}

void write_matrix(const std::string& path, const Eigen::MatrixXd& m,
                  const std::vector<std::string>& header) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  Writer w(out);
  w.header(header);
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) w.field(m(r, c));
    w.end_row();
  }
}

}  // namespace esb::csv
