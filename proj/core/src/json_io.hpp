#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace gridstate::detail {

using json = nlohmann::json;

json to_json(const Eigen::VectorXd& v);
/// Row-major nested arrays.
json to_json(const Eigen::MatrixXd& m);
Eigen::VectorXd vector_from_json(const json& j, std::string_view field);
Eigen::MatrixXd matrix_from_json(const json& j, std::string_view field);

/// Parses `text`, reporting syntax errors as "<what>: line L, column C: ...".
json parse_json(std::string_view text, std::string_view what);

/// Member lookup that names the missing field in the error.
const json& field(const json& j, std::string_view key, std::string_view context);

/// Two-space indented dump with a trailing newline; stable key order.
std::string dump(const json& j);

std::string read_text_file(const std::filesystem::path& path);
/// Writes through a temporary file in the same directory and renames it.
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace gridstate::detail
