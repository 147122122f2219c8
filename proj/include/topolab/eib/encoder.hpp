#pragma once

#include <cctype>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "topolab/agents.hpp"
#include "topolab/error.hpp"
#include "topolab/rng.hpp"

namespace topolab::eib {

inline constexpr std::string_view kDefaultSalt = "topolab-v1";

// Lower-cased alphanumeric runs; bytes >= 0x80 count as word characters so
// UTF-8 text is tokenized on ASCII punctuation and whitespace only.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(c < 0x80 ? std::tolower(c) : c));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Signed feature hashing of token 1-3 grams into `dim` buckets, L2-normalized.
// Empty text maps to the zero vector.
inline Eigen::VectorXd encode_text(std::string_view text, std::size_t dim, std::string_view salt = kDefaultSalt) {
  if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  const auto tokens = tokenize(text);
  for (std::size_t len = 1; len <= 3; ++len) {
    for (std::size_t start = 0; start + len <= tokens.size(); ++start) {
      std::string gram(salt);
      gram.push_back('\x1f');
      for (std::size_t t = 0; t < len; ++t) {
        if (t) gram.push_back(' ');
        gram += tokens[start + t];
      }
      const std::uint64_t h = mix64(fnv1a64(gram));
      const auto bucket = static_cast<Eigen::Index>(h % dim);
      v[bucket] += (h >> 63) ? -1.0 : 1.0;
    }
  }
  const double norm = v.norm();
  if (norm > 0.0) v /= norm;
  return v;
}

inline constexpr std::string_view kRoleQuerySeparator = "\n---\n";

// Agent features: role text and query encoded together.
inline Eigen::VectorXd encode_node(const AgentSpec& spec, const TaskItem& task, std::size_t dim,
                                   std::string_view salt = kDefaultSalt) {
  std::string text = spec.role_text;
  text += kRoleQuerySeparator;
  text += task.question;
  return encode_text(text, dim, salt);
}

inline Eigen::VectorXd encode_query(const TaskItem& task, std::size_t dim, std::string_view salt = kDefaultSalt) {
  return encode_text(task.question, dim, salt);
}

}  // namespace topolab::eib
