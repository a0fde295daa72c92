#include "hrtfgp/session_log.hpp"

#include <bit>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include "hrtfgp/container.hpp"
#include "hrtfgp/error.hpp"

namespace hrtfgp {

namespace {

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd from_json_vector(const nlohmann::json& j, const char* field) {
  if (!j.is_array()) throw FormatError(field, "expected an array");
  Eigen::VectorXd out(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw FormatError(field, "expected numbers");
    out[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return out;
}

}  // namespace

std::string mp_digest(const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  std::vector<std::byte> bytes;
  bytes.reserve(static_cast<std::size_t>(row.size()) * 8);
  for (Eigen::Index i = 0; i < row.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(row[i]);
    for (int b = 0; b < 8; ++b) bytes.push_back(static_cast<std::byte>((bits >> (8 * b)) & 0xff));
  }
  return container::hex64(container::fnv1a64(bytes));
}

std::string encode_round(const RoundRecord& r) {
  const nlohmann::json j = {{"type", "round"},
                            {"t", r.t},
                            {"target", r.target},
                            {"candidate_id", r.candidate_id},
                            {"mp_digest", r.mp_digest},
                            {"v", {r.v.x(), r.v.y(), r.v.z()}},
                            {"ssle_row", to_vector(r.ssle_row)},
                            {"eta", to_vector(r.eta)}};
  return j.dump();
}

RoundRecord decode_round(std::string_view line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("record", e.what());
  }
  RoundRecord r;
  try {
    for (const char* key : {"t", "target", "candidate_id", "mp_digest", "v", "ssle_row", "eta"}) {
      if (!j.contains(key)) throw FormatError(key, "missing from round record");
    }
    r.t = j.at("t").get<Eigen::Index>();
    r.target = j.at("target").get<Eigen::Index>();
    r.candidate_id = j.at("candidate_id").get<Eigen::Index>();
    r.mp_digest = j.at("mp_digest").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("record", e.what());
  }
  const Eigen::VectorXd v = from_json_vector(j.at("v"), "v");
  if (v.size() != 3) throw FormatError("v", "expected 3 components");
  r.v = v;
  r.ssle_row = from_json_vector(j.at("ssle_row"), "ssle_row");
  r.eta = from_json_vector(j.at("eta"), "eta");
  return r;
}

void append_line_durable(const std::filesystem::path& path, std::string_view line) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd < 0) throw IoError("cannot open " + path.string() + ": " + std::strerror(errno));
  std::string buf(line);
  buf.push_back('\n');
  const char* p = buf.data();
  std::size_t left = buf.size();
  while (left > 0) {
    const ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      const int err = errno;
      ::close(fd);
      throw IoError("write failed for " + path.string() + ": " + std::strerror(err));
    }
    p += n;
    left -= static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    const int err = errno;
    ::close(fd);
    throw IoError("fsync failed for " + path.string() + ": " + std::strerror(err));
  }
  ::close(fd);
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  const std::string text = container::read_text_file(path);
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\n') continue;
    if (i > start) out.emplace_back(text.substr(start, i - start));
    start = i + 1;
  }
  return out;
}

RoundRecord last_round_record(const ActiveSession& session, Eigen::Index target) {
  if (session.round() < 1) throw InvalidArgument("session has no rounds yet");
  const auto last = static_cast<std::size_t>(session.round() - 1);
  RoundRecord r;
  r.t = session.round() - 1;
  r.target = target;
  r.candidate_id = session.queried()[last];
  r.mp_digest = mp_digest(session.pool().row(r.candidate_id));
  r.v = session.reported()[last];
  r.ssle_row = session.ssle_matrix().col(r.t);
  r.eta = session.eta();
  return r;
}

void replay_rounds(ActiveSession& session, const std::vector<RoundRecord>& records) {
  for (const RoundRecord& r : records) {
    if (r.t != session.round()) throw FormatError("t", "rounds are out of order");
    if (r.candidate_id < 0 || r.candidate_id >= session.pool().rows()) {
      throw FormatError("candidate_id", "outside the candidate pool");
    }
    if (mp_digest(session.pool().row(r.candidate_id)) != r.mp_digest) {
      throw FormatError("mp_digest", "candidate row does not match the log");
    }
    session.record(r.candidate_id, r.v);
    if (session.ssle_matrix().col(r.t) != r.ssle_row) {
      throw FormatError("ssle_row", "recomputed SSLE differs from the log");
    }
  }
}

}  // namespace hrtfgp
