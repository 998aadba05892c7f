#include "json_io.hpp"

#include <fstream>
#include <sstream>

#include "gridstate/error.hpp"

namespace gridstate::detail {

json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(to_json(Eigen::VectorXd(m.row(r).transpose())));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j, std::string_view field) {
  if (!j.is_array()) throw Error(std::string(field) + ": expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) {
      throw Error(std::string(field) + "[" + std::to_string(i) + "]: expected a number");
    }
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd matrix_from_json(const json& j, std::string_view field) {
  if (!j.is_array()) throw Error(std::string(field) + ": expected an array of rows");
  if (j.empty()) return {};
  const std::string name(field);
  const Eigen::VectorXd first = vector_from_json(j[0], name + "[0]");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), first.size());
  m.row(0) = first.transpose();
  for (std::size_t r = 1; r < j.size(); ++r) {
    const Eigen::VectorXd row = vector_from_json(j[r], name + "[" + std::to_string(r) + "]");
    if (row.size() != first.size()) throw Error(name + ": ragged rows");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

json parse_json(std::string_view text, std::string_view what) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    // byte offset -> line/column
    std::size_t line = 1, column = 1;
    const std::size_t end = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
    for (std::size_t i = 0; i < end; ++i) {
      if (text[i] == '\n') {
        ++line;
        column = 1;
      } else {
        ++column;
      }
    }
    throw Error(std::string(what) + ": line " + std::to_string(line) + ", column " +
                std::to_string(column) + ": invalid JSON");
  }
}

const json& field(const json& j, std::string_view key, std::string_view context) {
  const std::string k(key);
  if (!j.is_object() || !j.contains(k)) {
    throw Error(std::string(context) + ": missing field \"" + k + "\"");
  }
  return j.at(k);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(path.string() + ": cannot write file");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error(path.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace gridstate::detail
