#pragma once

#include <Eigen/Dense>

#include <iosfwd>
#include <string>
#include <vector>

namespace esb::csv {

// Fixed 6-decimal formatting, "-0.000000" normalized to "0.000000".
std::string fmt(double x);
std::string quote(const std::string& field);

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}
  Writer& header(const std::vector<std::string>& names);
  Writer& field(const std::string& s);
  Writer& field(double x);
  Writer& field(long long x);
  Writer& field(int x) { return field(static_cast<long long>(x)); }
  Writer& field(std::size_t x) { return field(static_cast<long long>(x)); }
  Writer& field(bool x) { return field(std::string(x ? "true" : "false")); }
  void end_row();

 private:
  std::ostream& os_;
  bool row_started_ = false;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

Table read_table(const std::string& path);
Table parse_table(std::istream& is);

// Matrix with a header row of column labels and a first column of row labels.
Eigen::MatrixXd read_labeled_matrix(const std::string& path);
void write_labeled_matrix(const std::string& path, const Eigen::MatrixXd& m,
                          const std::string& corner = "node");

// Plain numeric matrix with a header row and no row labels.
Eigen::MatrixXd read_matrix(const std::string& path);
void write_matrix(const std::string& path, const Eigen::MatrixXd& m,
                  const std::vector<std::string>& header);

}  // namespace esb::csv
