#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace otws {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Error taxonomy. Every failure the library reports derives from Error so
// callers (the CLI in particular) can map them onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class InvalidState : public Error {
 public:
  using Error::Error;
};

class SolverFailure : public Error {
 public:
  SolverFailure(const std::string& what, long iterations)
      : Error(what), iterations_(iterations) {}
  long iterations() const { return iterations_; }

 private:
  long iterations_;
};

class NumericalFailure : public Error {
 public:
  NumericalFailure(const std::string& what, long iteration)
      : Error(what), iteration_(iteration) {}
  long iteration() const { return iteration_; }

 private:
  long iteration_;
};

class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class CorruptionError : public Error {
 public:
  using Error::Error;
};

class ConsistencyError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class DivergedError : public Error {
 public:
  using Error::Error;
};

// Pairwise (cascade) summation; the reduction tree depends only on the length.
double pairwise_sum(std::span<const double> values);
double pairwise_sum(const Vector& v);
double pairwise_sum(const Matrix& m);
double pairwise_dot(std::span<const double> a, std::span<const double> b);
double pairwise_dot(const Vector& a, const Vector& b);

// Worker count: OTWS_THREADS if set and positive, else hardware concurrency.
// exp(x), with results below the smallest normal double returned as 0.
// Subnormal results are both negligible here and very slow to compute with.
double exp_flush(double x);

unsigned thread_count();

// Runs body(i) for i in [0, count) on up to thread_count() workers. Exceptions
// thrown by body are rethrown on the calling thread (first one wins).
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

// 64-bit FNV-1a, used for stable digests of RNG state and small blobs.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes);
std::uint64_t fnv1a64(const std::string& text);

}  // namespace otws
