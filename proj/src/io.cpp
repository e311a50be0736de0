#include "ippgd/io.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

namespace ippgd {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

struct MmHeader {
  bool coordinate = true;
  bool symmetric = false;
};

MmHeader parse_banner(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw Error(path + ": empty Matrix Market file");
  std::istringstream ss(lower(line));
  std::string banner, object, format, field, symmetry;
  ss >> banner >> object >> format >> field >> symmetry;
  if (banner != "%%matrixmarket" || object != "matrix") throw Error(path + ": missing Matrix Market banner");
  if (field != "real" && field != "double" && field != "integer") throw Error(path + ": unsupported field '" + field + "'");
  MmHeader h;
  if (format == "coordinate") {
    h.coordinate = true;
  } else if (format == "array") {
    h.coordinate = false;
  } else {
    throw Error(path + ": unsupported format '" + format + "'");
  }
  if (symmetry == "symmetric") {
    h.symmetric = true;
  } else if (symmetry != "general") {
    throw Error(path + ": unsupported symmetry '" + symmetry + "'");
  }
  return h;
}

bool next_data_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto pos = line.find_first_not_of(" \t\r");
    if (pos == std::string::npos || line[pos] == '%' || line[pos] == '#') continue;
    return true;
  }
  return false;
}

}  // namespace

DenseMatrix read_matrix_market_dense(const std::string& path) { return DenseMatrix(read_matrix_market(path)); }

SparseMatrix read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  const MmHeader h = parse_banner(in, path);
  std::string line;
  if (!next_data_line(in, line)) throw Error(path + ": missing size line");
  std::istringstream size_line(line);
  Index rows = 0, cols = 0, nnz = 0;
  size_line >> rows >> cols;
  if (h.coordinate) size_line >> nnz;
  if (!size_line || rows < 0 || cols < 0) throw Error(path + ": malformed size line");

  std::vector<Eigen::Triplet<double>> trips;
  if (h.coordinate) {
    trips.reserve(static_cast<std::size_t>(h.symmetric ? 2 * nnz : nnz));
    for (Index k = 0; k < nnz; ++k) {
      if (!next_data_line(in, line)) throw Error(path + ": truncated entry list");
      std::istringstream es(line);
      Index i = 0, j = 0;
      double v = 0.0;
      es >> i >> j >> v;
      if (!es || i < 1 || j < 1 || i > rows || j > cols) throw Error(path + ": malformed entry '" + line + "'");
      trips.emplace_back(i - 1, j - 1, v);
      if (h.symmetric && i != j) trips.emplace_back(j - 1, i - 1, v);
    }
  } else {
    for (Index j = 0; j < cols; ++j) {
      for (Index i = h.symmetric ? j : 0; i < rows; ++i) {
        if (!next_data_line(in, line)) throw Error(path + ": truncated array data");
        const double v = std::stod(line);
        if (v == 0.0) continue;
        trips.emplace_back(i, j, v);
        if (h.symmetric && i != j) trips.emplace_back(j, i, v);
      }
    }
  }
  SparseMatrix a(rows, cols);
  a.setFromTriplets(trips.begin(), trips.end());
  return a;
}

void write_matrix_market(const std::string& path, const SparseMatrix& a) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
  for (Index i = 0; i < a.outerSize(); ++i) {
    for (SparseMatrix::InnerIterator it(a, i); it; ++it) {
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << fmt(it.value()) << '\n';
    }
  }
}

void write_matrix_market(const std::string& path, const DenseMatrix& a) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "%%MatrixMarket matrix array real general\n";
  out << a.rows() << ' ' << a.cols() << '\n';
  for (Index j = 0; j < a.cols(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) out << fmt(a(i, j)) << '\n';
  }
}

void write_vector_text(const std::string& path, const Vector& v) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (Index i = 0; i < v.size(); ++i) out << fmt(v[i]) << '\n';
}

Vector read_vector_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<double> vals;
  std::string line;
  while (next_data_line(in, line)) {
    try {
      vals.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw Error(path + ": not a number: '" + line + "'");
    }
  }
  return Eigen::Map<Vector>(vals.data(), static_cast<Index>(vals.size()));
}

}  // namespace ippgd
