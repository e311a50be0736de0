#pragma once

// Matrix Market and plain-text vector files.

#include "ippgd/operator.hpp"

#include <string>

namespace ippgd {

/// Reads a real Matrix Market file (coordinate or array, general or
/// symmetric) into a sparse matrix.
SparseMatrix read_matrix_market(const std::string& path);
void write_matrix_market(const std::string& path, const SparseMatrix& a);
/// Dense matrices are written in array format.
void write_matrix_market(const std::string& path, const DenseMatrix& a);
DenseMatrix read_matrix_market_dense(const std::string& path);

/// One value per line, written with round-trip precision. Lines starting
/// with # or % are skipped on read.
void write_vector_text(const std::string& path, const Vector& v);
Vector read_vector_text(const std::string& path);

}  // namespace ippgd
