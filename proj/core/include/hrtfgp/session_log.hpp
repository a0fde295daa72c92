#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "hrtfgp/active.hpp"

namespace hrtfgp {

// One answered query, as stored in a session's JSON-lines log.
struct RoundRecord {
  Eigen::Index t = 0;             // round within the target
  Eigen::Index target = 0;        // position in the session plan
  Eigen::Index candidate_id = 0;  // row of the target's candidate pool
  std::string mp_digest;          // digest of that row
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::VectorXd ssle_row;
  Eigen::VectorXd eta;
};

// FNV-1a over the little-endian f64 bytes of the row, as 16 hex digits.
std::string mp_digest(const Eigen::Ref<const Eigen::RowVectorXd>& row);

// Single line without the trailing newline. Doubles round-trip exactly.
std::string encode_round(const RoundRecord& record);
RoundRecord decode_round(std::string_view line);

// Appends `line` plus a newline and fsyncs before returning.
void append_line_durable(const std::filesystem::path& path, std::string_view line);

// Complete lines of a JSON-lines file. A torn final line (no newline) is dropped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

// Record for the most recent round of `session`.
RoundRecord last_round_record(const ActiveSession& session, Eigen::Index target);

// Re-applies logged rounds to a fresh session, checking candidate digests and
// the recomputed SSLE rows. Throws FormatError on any mismatch.
void replay_rounds(ActiveSession& session, const std::vector<RoundRecord>& records);

}  // namespace hrtfgp
