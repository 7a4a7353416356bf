#pragma once

#include <Eigen/Core>
#include <Eigen/Sparse>

#include <stdexcept>
#include <string>

namespace idm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IndexMatrix = Eigen::MatrixXi;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Index = Eigen::Index;

// Error hierarchy. The CLI maps these onto exit codes:
// parameter/usage -> 2, data validation -> 3, numerical failure -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParameterError : public Error {
public:
    using Error::Error;
};

// Bad input data: unparseable, ragged, or non-finite.
class ValidationError : public Error {
public:
    using Error::Error;
};

class FormatError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class ShapeError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IoError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

class SolverError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ConnectivityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DegenerateGeometryError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw ParameterError(msg);
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) {
    return m.allFinite();
}

} // namespace idm
