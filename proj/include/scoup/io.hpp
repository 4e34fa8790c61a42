#pragma once

// Plain-text coordinate files. Paths ending in .gz are read and written
// through zlib; reading also accepts uncompressed files under any name.
//
//   tensor I J K nnz        matrix R C nnz
//   i j k value             i j value
//
// Indices are 1-based. Blank lines and lines starting with '#' are skipped.

#include <zlib.h>

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "scoup/driver.hpp"

namespace scoup {

namespace detail {

inline bool ends_with_gz(const std::string& path) {
  return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

inline std::string read_all(const std::string& path) {
  gzFile file = gzopen(path.c_str(), "rb");
  if (!file) throw DataError(path + ": cannot open");
  std::string out;
  char buf[1 << 16];
  int got = 0;
  while ((got = gzread(file, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(got));
  const bool failed = got < 0;
  gzclose(file);
  if (failed) throw DataError(path + ": read error");
  return out;
}

inline void write_all(const std::string& path, const std::string& text) {
  if (ends_with_gz(path)) {
    gzFile file = gzopen(path.c_str(), "wb");
    if (!file) throw DataError(path + ": cannot open for writing");
    const int put = text.empty() ? 0 : gzwrite(file, text.data(), static_cast<unsigned>(text.size()));
    const int closed = gzclose(file);
    if (put != static_cast<int>(text.size()) || closed != Z_OK)
      throw DataError(path + ": write error");
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << text;
  out.close();
  if (!out) throw DataError(path + ": write error");
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Splits a file into tokenized content lines, remembering line numbers.
class LineReader {
 public:
  LineReader(std::string path, const std::string& text) : path_(std::move(path)) {
    std::size_t start = 0, number = 0;
    while (start <= text.size()) {
      std::size_t end = text.find('\n', start);
      if (end == std::string::npos) end = text.size();
      ++number;
      std::string_view line(text.data() + start, end - start);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      const auto first = line.find_first_not_of(" \t");
      if (first != std::string_view::npos && line[first] != '#')
        lines_.push_back({number, std::string(line)});
      if (end == text.size()) break;
      start = end + 1;
    }
  }

  bool done() const { return next_ >= lines_.size(); }
  std::size_t line() const { return lines_[current_].first; }

  std::vector<std::string> next() {
    current_ = next_++;
    std::istringstream in(lines_[current_].second);
    std::vector<std::string> tokens;
    for (std::string t; in >> t;) tokens.push_back(t);
    return tokens;
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(path_ + ":" + std::to_string(line()) + ": " + msg);
  }
  [[noreturn]] void fail_eof(const std::string& msg) const { throw DataError(path_ + ": " + msg); }

  std::size_t to_size(const std::string& tok, const char* what) const {
    std::size_t v = 0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      fail(std::string("bad ") + what + " '" + tok + "'");
    return v;
  }

  double to_double(const std::string& tok) const {
    double v = 0.0;
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      fail("bad value '" + tok + "'");
    if (!std::isfinite(v)) fail("non-finite value");
    return v;
  }

  std::size_t to_index(const std::string& tok, std::size_t bound, const char* what) const {
    const std::size_t v = to_size(tok, what);
    if (v == 0) fail(std::string(what) + " is 0; indices are 1-based");
    if (v > bound)
      fail(std::string(what) + " " + tok + " out of range 1.." + std::to_string(bound));
    return v - 1;
  }

 private:
  std::string path_;
  std::vector<std::pair<std::size_t, std::string>> lines_;
  std::size_t next_ = 0, current_ = 0;
};

inline std::vector<std::size_t> read_header(LineReader& in, const char* kind, std::size_t n) {
  if (in.done()) in.fail_eof(std::string("empty file, expected '") + kind + "' header");
  const auto tok = in.next();
  if (tok.size() != n + 1 || tok[0] != kind)
    in.fail(std::string("malformed header, expected '") + kind + "' and " + std::to_string(n) +
            " counts");
  std::vector<std::size_t> out;
  for (std::size_t i = 1; i < tok.size(); ++i) out.push_back(in.to_size(tok[i], "header count"));
  return out;
}

inline void check_count(LineReader& in, std::size_t declared, std::size_t seen) {
  if (seen < declared)
    in.fail_eof("header declares " + std::to_string(declared) + " entries, found " +
                std::to_string(seen));
  if (!in.done()) {
    in.next();
    in.fail("more entries than the declared " + std::to_string(declared));
  }
}

}  // namespace detail

inline Tensor3 parse_tensor(const std::string& text, const std::string& path = "<tensor>") {
  detail::LineReader in(path, text);
  const auto h = detail::read_header(in, "tensor", 4);
  const Dims3 dims{h[0], h[1], h[2]};
  if (h[0] == 0 || h[1] == 0 || h[2] == 0) in.fail("dimensions must be positive");
  std::map<std::array<std::size_t, 3>, std::size_t> seen;
  std::vector<Entry> entries;
  entries.reserve(std::min<std::size_t>(h[3], 1u << 24));
  while (entries.size() < h[3] && !in.done()) {
    const auto tok = in.next();
    if (tok.size() != 4) in.fail("expected 'i j k value'");
    Entry e{in.to_index(tok[0], dims[0], "i"), in.to_index(tok[1], dims[1], "j"),
            in.to_index(tok[2], dims[2], "k"), in.to_double(tok[3])};
    const auto [it, fresh] = seen.emplace(std::array<std::size_t, 3>{e.i, e.j, e.k}, in.line());
    if (!fresh) in.fail("duplicate coordinate, first seen on line " + std::to_string(it->second));
    entries.push_back(e);
  }
  detail::check_count(in, h[3], entries.size());
  return Tensor3::from_entries(dims, std::move(entries));
}

inline Matrix parse_matrix(const std::string& text, const std::string& path = "<matrix>") {
  detail::LineReader in(path, text);
  const auto h = detail::read_header(in, "matrix", 3);
  if (h[0] == 0 || h[1] == 0) in.fail("dimensions must be positive");
  Matrix m = Matrix::Zero(static_cast<Index>(h[0]), static_cast<Index>(h[1]));
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> seen;
  std::size_t count = 0;
  while (count < h[2] && !in.done()) {
    const auto tok = in.next();
    if (tok.size() != 3) in.fail("expected 'i j value'");
    const std::size_t i = in.to_index(tok[0], h[0], "i");
    const std::size_t j = in.to_index(tok[1], h[1], "j");
    const double v = in.to_double(tok[2]);
    const auto [it, fresh] = seen.emplace(std::pair{i, j}, in.line());
    if (!fresh) in.fail("duplicate coordinate, first seen on line " + std::to_string(it->second));
    m(static_cast<Index>(i), static_cast<Index>(j)) = v;
    ++count;
  }
  detail::check_count(in, h[2], count);
  return m;
}

/// Sparse tensors list their nonzeros, dense tensors every entry.
inline std::string format_tensor(const Tensor3& t) {
  const auto& d = t.dims();
  std::string out;
  auto line = [&](std::size_t i, std::size_t j, std::size_t k, double v) {
    out += std::to_string(i + 1) + ' ' + std::to_string(j + 1) + ' ' + std::to_string(k + 1) +
           ' ' + detail::format_double(v) + '\n';
  };
  if (t.is_sparse()) {
    out = "tensor " + std::to_string(d[0]) + ' ' + std::to_string(d[1]) + ' ' +
          std::to_string(d[2]) + ' ' + std::to_string(t.entries().size()) + '\n';
    for (const Entry& e : t.entries()) line(e.i, e.j, e.k, e.value);
  } else {
    out = "tensor " + std::to_string(d[0]) + ' ' + std::to_string(d[1]) + ' ' +
          std::to_string(d[2]) + ' ' + std::to_string(t.size()) + '\n';
    for (std::size_t i = 0; i < d[0]; ++i)
      for (std::size_t j = 0; j < d[1]; ++j)
        for (std::size_t k = 0; k < d[2]; ++k) line(i, j, k, t(i, j, k));
  }
  return out;
}

/// Lists nonzero entries only, column-major.
inline std::string format_matrix(const Matrix& m) {
  std::string body;
  std::size_t nnz = 0;
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r) {
      if (m(r, c) == 0.0) continue;
      body += std::to_string(r + 1) + ' ' + std::to_string(c + 1) + ' ' +
              detail::format_double(m(r, c)) + '\n';
      ++nnz;
    }
  return "matrix " + std::to_string(m.rows()) + ' ' + std::to_string(m.cols()) + ' ' +
         std::to_string(nnz) + '\n' + body;
}

inline Tensor3 read_tensor(const std::string& path) {
  return parse_tensor(detail::read_all(path), path);
}
inline Matrix read_matrix(const std::string& path) {
  return parse_matrix(detail::read_all(path), path);
}
inline void write_tensor(const Tensor3& t, const std::string& path) {
  detail::write_all(path, format_tensor(t));
}
inline void write_matrix(const Matrix& m, const std::string& path) {
  detail::write_all(path, format_matrix(m));
}

inline Tensor3 read_tensor_mask(const std::string& path) {
  Tensor3 t = read_tensor(path);
  t.for_each_nonzero([&](std::size_t i, std::size_t j, std::size_t k, double v) {
    if (v != 1.0)
      throw DataError(path + ": mask value at (" + std::to_string(i + 1) + "," +
                      std::to_string(j + 1) + "," + std::to_string(k + 1) + ") is not 0 or 1");
  });
  return t;
}

inline Matrix read_matrix_mask(const std::string& path) {
  Matrix m = read_matrix(path);
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r)
      if (m(r, c) != 0.0 && m(r, c) != 1.0)
        throw DataError(path + ": mask value at (" + std::to_string(r + 1) + "," +
                        std::to_string(c + 1) + ") is not 0 or 1");
  return m;
}

inline std::string format_vector(const Vector& v) {
  std::string out;
  for (Index i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += detail::format_double(v(i));
  }
  return out;
}

/// One line per lambda vector: "A 1.0 2.0 ...".
inline std::string format_lambdas(const FactorSet& f) {
  std::string out;
  for (std::size_t n = 0; n < 3; ++n)
    out += std::string(factor_name(false, n)) + ' ' + format_vector(f.tensor_lambda[n]) + '\n';
  for (std::size_t n = 0; n < 3; ++n)
    if (f.side[n])
      out += std::string(factor_name(true, n)) + ' ' + format_vector(f.side_lambda[n]) + '\n';
  return out;
}

struct FitRecord {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<double> trace;
  double final_objective = 0.0;
  std::optional<RunReport> turbo;
  /// Wall clock of a run without phases; negative when unknown.
  double seconds = -1.0;
  std::vector<std::pair<std::string, double>> metrics;
};

inline std::string format_spec_sizes(const SampleSpec& spec) {
  std::string out;
  for (std::size_t n = 0; n < 3; ++n) {
    out += ' ' + std::to_string(spec.tensor[n].size());
    if (spec.side[n]) out += '/' + std::to_string(spec.side[n]->size());
  }
  return out;
}

/// Every line is deterministic for a fixed seed except those starting "time".
inline std::string format_report(const FitRecord& rec) {
  std::ostringstream out;
  out << "method " << rec.method << '\n';
  out << "seed " << rec.seed << '\n';
  out << "final_objective " << detail::format_double(rec.final_objective) << '\n';
  for (const auto& [name, value] : rec.metrics)
    out << "metric " << name << ' ' << detail::format_double(value) << '\n';
  out << "iterations " << (rec.trace.empty() ? 0 : rec.trace.size() - 1) << '\n';
  for (std::size_t t = 0; t < rec.trace.size(); ++t)
    out << "objective " << t << ' ' << detail::format_double(rec.trace[t]) << '\n';
  if (rec.turbo) {
    const RunReport& r = *rec.turbo;
    out << "common" << format_spec_sizes(r.common) << '\n';
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
      out << "repetition " << i + 1 << " sizes" << format_spec_sizes(r.samples[i]) << '\n';
      out << "repetition " << i + 1 << " iterations " << r.repetition_iterations[i] << '\n';
      out << "repetition " << i + 1 << " objective "
          << detail::format_double(r.repetition_objectives[i]) << '\n';
    }
    for (const auto& a : r.ambiguities)
      out << "ambiguity " << a.factor << " partial " << a.note.partial + 1 << " column "
          << a.note.column + 1 << " assigned " << a.note.assigned + 1 << " best "
          << detail::format_double(a.note.best) << " runner_up "
          << detail::format_double(a.note.runner_up) << " " << a.note.reason << '\n';
    for (const auto& w : r.warnings) out << "warning " << w << '\n';
    out << "time sampling " << r.seconds.sampling << '\n';
    out << "time fitting " << r.seconds.fitting << '\n';
    out << "time merging " << r.seconds.merging << '\n';
    out << "time total " << r.seconds.total() << '\n';
  } else if (rec.seconds >= 0.0) {
    out << "time total " << rec.seconds << '\n';
  }
  return out.str();
}

inline void write_factors(const FactorSet& f, const FitRecord& rec, const std::string& dir) {
  f.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError(dir + ": cannot create directory: " + ec.message());
  const std::filesystem::path base(dir);
  for (std::size_t n = 0; n < 3; ++n) {
    write_matrix(f.tensor[n], (base / (std::string(factor_name(false, n)) + ".mtx")).string());
    if (f.side[n])
      write_matrix(*f.side[n], (base / (std::string(factor_name(true, n)) + ".mtx")).string());
  }
  detail::write_all((base / "lambdas.txt").string(), format_lambdas(f));
  detail::write_all((base / "report.txt").string(), format_report(rec));
}

/// Reads A..C (required), D..G (when present) and lambdas.txt (ones if absent).
inline FactorSet read_factors(const std::string& dir) {
  const std::filesystem::path base(dir);
  FactorSet f;
  for (std::size_t n = 0; n < 3; ++n) {
    const auto t = base / (std::string(factor_name(false, n)) + ".mtx");
    f.tensor[n] = read_matrix(t.string());
    const auto s = base / (std::string(factor_name(true, n)) + ".mtx");
    if (std::filesystem::exists(s)) f.side[n] = read_matrix(s.string());
  }
  for (std::size_t n = 0; n < 3; ++n)
    if (f.tensor[n].cols() != f.tensor[0].cols() ||
        (f.side[n] && f.side[n]->cols() != f.tensor[0].cols()))
      throw DataError(dir + ": factor column counts differ");
  f.reset_lambdas();
  const auto lpath = base / "lambdas.txt";
  if (!std::filesystem::exists(lpath)) return f;
  const std::string text = detail::read_all(lpath.string());
  detail::LineReader in(lpath.string(), text);
  while (!in.done()) {
    const auto tok = in.next();
    if (tok.empty() || tok[0].size() != 1) in.fail("expected a factor name");
    Vector* target = nullptr;
    for (std::size_t n = 0; n < 3; ++n) {
      if (tok[0] == factor_name(false, n)) target = &f.tensor_lambda[n];
      if (tok[0] == factor_name(true, n)) {
        if (!f.side[n]) in.fail("lambda for absent factor " + tok[0]);
        target = &f.side_lambda[n];
      }
    }
    if (!target) in.fail("unknown factor '" + tok[0] + "'");
    if (static_cast<Index>(tok.size() - 1) != f.rank()) in.fail("lambda length differs from rank");
    for (Index c = 0; c < f.rank(); ++c) (*target)(c) = in.to_double(tok[static_cast<std::size_t>(c) + 1]);
  }
  return f;
}

}  // namespace scoup
