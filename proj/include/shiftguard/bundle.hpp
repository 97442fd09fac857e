#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "shiftguard/error.hpp"
#include "shiftguard/graph.hpp"
#include "shiftguard/io.hpp"

namespace shiftguard {

// Graph bundle: a directory with meta.json, edges.csv, features.csv,
// labels.csv (only when labeled) and masks.csv, all row-indexed by node id.

inline void save_bundle(const Graph& g, const std::filesystem::path& dir) {
  g.validate();
  std::filesystem::create_directories(dir);

  io::Json meta;
  meta["num_nodes"] = g.num_nodes();
  meta["feat_dim"] = g.feat_dim();
  meta["has_labels"] = g.has_labels();
  io::write_json(dir / "meta.json", meta);

  std::string edges = "src,dst\n";
  const auto& a = g.adjacency;
  for (std::size_t i = 0; i < a.n(); ++i)
    for (std::size_t p = a.row_ptr()[i]; p < a.row_ptr()[i + 1]; ++p)
      edges += std::to_string(i) + "," + std::to_string(a.col_idx()[p]) + "\n";
  io::write_file(dir / "edges.csv", edges);

  std::string feats;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    const auto row = g.features.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) feats += ',';
      feats += io::format_double(row[k]);
    }
    feats += '\n';
  }
  io::write_file(dir / "features.csv", feats);

  if (g.labels) {
    std::string labels = "label\n";
    for (int y : *g.labels) labels += std::to_string(y) + "\n";
    io::write_file(dir / "labels.csv", labels);
  } else {
    std::filesystem::remove(dir / "labels.csv");
  }

  std::string masks = "train,val,test,unseen\n";
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    masks += g.train[i] ? "1," : "0,";
    masks += g.val[i] ? "1," : "0,";
    masks += g.test[i] ? "1," : "0,";
    masks += g.unseen[i] ? "1\n" : "0\n";
  }
  io::write_file(dir / "masks.csv", masks);
}

namespace detail {

inline void expect_header(const std::vector<std::string>& lines, const std::string& header,
                          const std::filesystem::path& file) {
  if (lines.empty() || lines.front() != header)
    throw FormatError(file.string() + ": expected header '" + header + "'");
}

inline void expect_rows(const std::vector<std::string>& lines, std::size_t skip, std::size_t n,
                        const std::filesystem::path& file) {
  if (lines.size() - skip != n)
    throw FormatError(file.string() + ": expected " + std::to_string(n) + " rows, found " +
                      std::to_string(lines.size() - skip));
}

inline bool parse_flag(std::string_view s, const std::string& where) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw FormatError(where + ": expected 0 or 1, got '" + std::string(s) + "'");
}

}  // namespace detail

inline Graph load_bundle(const std::filesystem::path& dir) {
  const io::Json meta = io::read_json(dir / "meta.json");
  const std::string mwhere = (dir / "meta.json").string();
  const auto& jn = io::field(meta, "num_nodes", mwhere);
  const auto& jd = io::field(meta, "feat_dim", mwhere);
  const auto& jl = io::field(meta, "has_labels", mwhere);
  if (!jn.is_number_unsigned() || !jd.is_number_unsigned() || !jl.is_boolean())
    throw FormatError(mwhere + ": wrong field types");
  const auto n = jn.get<std::size_t>();
  const auto d = jd.get<std::size_t>();
  const bool has_labels = jl.get<bool>();

  Graph g;

  {
    const auto file = dir / "features.csv";
    const auto lines = io::read_lines(file);
    detail::expect_rows(lines, 0, n, file);
    g.features = Tensor(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const auto cells = io::split(lines[i]);
      if (cells.size() != d)
        throw FormatError(file.string() + ": row " + std::to_string(i) + " has " + std::to_string(cells.size()) +
                          " columns, feat_dim is " + std::to_string(d));
      for (std::size_t k = 0; k < d; ++k) g.features(i, k) = io::parse_double(cells[k], file.string());
    }
  }

  {
    const auto file = dir / "edges.csv";
    const auto lines = io::read_lines(file);
    detail::expect_header(lines, "src,dst", file);
    std::vector<std::pair<std::size_t, std::size_t>> arcs;
    arcs.reserve(lines.size() - 1);
    for (std::size_t r = 1; r < lines.size(); ++r) {
      const auto cells = io::split(lines[r]);
      if (cells.size() != 2) throw FormatError(file.string() + ": expected 2 columns");
      const long long s = io::parse_int(cells[0], file.string());
      const long long t = io::parse_int(cells[1], file.string());
      if (s < 0 || t < 0 || static_cast<std::size_t>(s) >= n || static_cast<std::size_t>(t) >= n)
        throw FormatError(file.string() + ": node id out of range");
      arcs.emplace_back(static_cast<std::size_t>(s), static_cast<std::size_t>(t));
    }
    try {
      g.adjacency = adjacency_from_arcs(n, arcs);
    } catch (const ContractError& e) {
      throw FormatError(file.string() + ": " + e.what());
    }
  }

  if (has_labels) {
    const auto file = dir / "labels.csv";
    const auto lines = io::read_lines(file);
    detail::expect_header(lines, "label", file);
    detail::expect_rows(lines, 1, n, file);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = detail::parse_flag(lines[i + 1], file.string()) ? 1 : 0;
    g.labels = std::move(labels);
  }

  {
    const auto file = dir / "masks.csv";
    const auto lines = io::read_lines(file);
    detail::expect_header(lines, "train,val,test,unseen", file);
    detail::expect_rows(lines, 1, n, file);
    for (Mask* m : {&g.train, &g.val, &g.test, &g.unseen}) m->assign(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      const auto cells = io::split(lines[i + 1]);
      if (cells.size() != 4) throw FormatError(file.string() + ": expected 4 columns");
      g.train[i] = detail::parse_flag(cells[0], file.string());
      g.val[i] = detail::parse_flag(cells[1], file.string());
      g.test[i] = detail::parse_flag(cells[2], file.string());
      g.unseen[i] = detail::parse_flag(cells[3], file.string());
    }
  }

  try {
    g.validate();
  } catch (const ContractError& e) {
    throw FormatError(dir.string() + ": " + e.what());
  }
  return g;
}

}  // namespace shiftguard
