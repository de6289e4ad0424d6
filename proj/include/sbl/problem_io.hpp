#pragma once

// Plain-text problem container:
//
//   1,<real|complex>,M,L
//   M lines, one row of H each (complex entries as re,im pairs)
//   1 line: y
//   optional 1 line: alpha_true
//   optional 1 line: lambda
//
// Values are comma separated decimal text written in shortest round-trip form.

#include <charconv>
#include <complex>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sbl/model.hpp"

namespace sbl {

using AnyProblem = std::variant<ProblemInstance<double>, ProblemInstance<std::complex<double>>>;

inline constexpr int kProblemFormatVersion = 1;

namespace io_detail {

inline std::string fmt(double v)
{
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("failed to format value");
  return {buf, end};
}

inline double parse_double(std::string_view s)
{
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw std::runtime_error("problem file: malformed number '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line)
{
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <FieldScalar Scalar>
void write_row(std::ostream& os, const auto& row)
{
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    if (i) os << ',';
    if constexpr (std::is_same_v<Scalar, double>) {
      os << fmt(row(i));
    } else {
      os << fmt(row(i).real()) << ',' << fmt(row(i).imag());
    }
  }
  os << '\n';
}

template <FieldScalar Scalar>
Vec<Scalar> parse_row(const std::string& line, int n, const char* what)
{
  const auto cells = split(line);
  constexpr int width = is_complex<Scalar>::value ? 2 : 1;
  if (static_cast<int>(cells.size()) != width * n)
    throw std::runtime_error(std::string("problem file: ") + what + " has " + std::to_string(cells.size()) +
                             " values, expected " + std::to_string(width * n));
  Vec<Scalar> v(n);
  for (int i = 0; i < n; ++i) {
    if constexpr (width == 1) {
      v(i) = parse_double(cells[i]);
    } else {
      v(i) = Scalar(parse_double(cells[2 * i]), parse_double(cells[2 * i + 1]));
    }
  }
  return v;
}

inline bool next_line(std::istream& is, std::string& line)
{
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) return true;
  }
  return false;
}

template <FieldScalar Scalar>
ProblemInstance<Scalar> read_body(std::istream& is, int M, int L)
{
  ProblemInstance<Scalar> p;
  p.H.resize(M, L);
  std::string line;
  for (int m = 0; m < M; ++m) {
    if (!next_line(is, line)) throw std::runtime_error("problem file: truncated dictionary");
    p.H.row(m) = parse_row<Scalar>(line, L, "dictionary row").transpose();
  }
  if (!next_line(is, line)) throw std::runtime_error("problem file: missing observation line");
  p.y = parse_row<Scalar>(line, M, "observation");
  p.alpha_true = Vec<Scalar>::Zero(L);
  p.has_truth = false;
  if (next_line(is, line)) {
    p.alpha_true = parse_row<Scalar>(line, L, "alpha_true");
    p.has_truth = true;
    for (int l = 0; l < L; ++l)
      if (std::abs(p.alpha_true(l)) > 0.0) p.support_true.push_back(l);
    if (next_line(is, line)) {
      p.lambda_true = parse_double(line);
      if (!(p.lambda_true > 0.0)) throw std::runtime_error("problem file: lambda must be positive");
    }
  }
  return p;
}

}  // namespace io_detail

template <FieldScalar Scalar>
void write_problem(std::ostream& os, const ProblemInstance<Scalar>& p, bool with_truth = true)
{
  os << kProblemFormatVersion << ',' << to_string(FieldTraits<Scalar>::kind) << ',' << p.M() << ',' << p.L()
     << '\n';
  for (int m = 0; m < p.M(); ++m) io_detail::write_row<Scalar>(os, p.H.row(m));
  io_detail::write_row<Scalar>(os, p.y);
  if (with_truth && p.has_truth) {
    io_detail::write_row<Scalar>(os, p.alpha_true);
    os << io_detail::fmt(p.lambda_true) << '\n';
  }
}

inline AnyProblem read_problem(std::istream& is)
{
  std::string line;
  if (!io_detail::next_line(is, line)) throw std::runtime_error("problem file: empty");
  const auto head = io_detail::split(line);
  if (head.size() != 4) throw std::runtime_error("problem file: header must be 'version,field,M,L'");
  auto trim = [](std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    return s;
  };
  const double version = io_detail::parse_double(head[0]);
  if (version != kProblemFormatVersion)
    throw std::runtime_error("problem file: unsupported format version " + std::string(head[0]));
  const FieldKind field = parse_field(trim(head[1]));
  const double M = io_detail::parse_double(head[2]);
  const double L = io_detail::parse_double(head[3]);
  if (M < 1 || L < 1 || M != std::floor(M) || L != std::floor(L))
    throw std::runtime_error("problem file: M and L must be positive integers");
  if (field == FieldKind::Real) return io_detail::read_body<double>(is, static_cast<int>(M), static_cast<int>(L));
  return io_detail::read_body<std::complex<double>>(is, static_cast<int>(M), static_cast<int>(L));
}

inline AnyProblem load_problem(const std::string& path)
{
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open problem file '" + path + "'");
  return read_problem(is);
}

template <FieldScalar Scalar>
void save_problem(const std::string& path, const ProblemInstance<Scalar>& p)
{
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write problem file '" + path + "'");
  write_problem(os, p);
}

}  // namespace sbl
