#include "dcc/ntu_parser.hpp"

#include "dcc/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace dcc {

namespace {

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::string next(const char* what) {
    std::string line;
    if (!std::getline(in_, line)) throw ParseError(std::string("unexpected end of file, expected ") + what, line_ + 1);
    ++line_;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  }

  std::size_t line() const { return line_; }

 private:
  std::istream& in_;
  std::size_t line_ = 0;
};

long long parse_count(const std::string& text, const char* what, std::size_t line) {
  std::istringstream ss(text);
  long long value = 0;
  std::string rest;
  if (!(ss >> value) || (ss >> rest) || value < 0) {
    throw ParseError(std::string("malformed ") + what + ": '" + text + "'", line);
  }
  return value;
}

}  // namespace

std::vector<SkeletonSequence> parse_ntu_skeleton(std::istream& in, const SkeletonTopology& topology) {
  LineReader reader(in);
  const auto n_frames = parse_count(reader.next("frame count"), "frame count", reader.line());
  const int V = topology.n_joints();

  std::map<std::string, std::size_t> body_index;
  std::vector<SkeletonSequence> bodies;

  for (long long f = 0; f < n_frames; ++f) {
    const auto n_bodies = parse_count(reader.next("body count"), "body count", reader.line());
    for (long long b = 0; b < n_bodies; ++b) {
      const auto info = reader.next("body info line");
      std::istringstream info_ss(info);
      std::vector<std::string> fields;
      for (std::string tok; info_ss >> tok;) fields.push_back(tok);
      if (fields.size() != 10) {
        throw ParseError("body info line must have 10 fields, found " + std::to_string(fields.size()), reader.line());
      }
      const auto n_joints = parse_count(reader.next("joint count"), "joint count", reader.line());
      if (n_joints != V) {
        throw SchemaError("line " + std::to_string(reader.line()) + ": joint count " + std::to_string(n_joints) +
                          " does not match topology (" + std::to_string(V) + ")");
      }
      auto [it, inserted] = body_index.emplace(fields[0], bodies.size());
      if (inserted) {
        SkeletonSequence seq;
        seq.coords = Coords(3, V, static_cast<int>(n_frames));
        bodies.push_back(std::move(seq));
      }
      auto& coords = bodies[it->second].coords;
      for (int v = 0; v < V; ++v) {
        const auto line = reader.next("joint line");
        std::istringstream js(line);
        float xyz[3];
        if (!(js >> xyz[0] >> xyz[1] >> xyz[2])) throw ParseError("malformed joint line: '" + line + "'", reader.line());
        for (int c = 0; c < 3; ++c) {
          if (!std::isfinite(xyz[c])) throw ParseError("non-finite coordinate", reader.line());
          coords(c, v, static_cast<int>(f)) = xyz[c];
        }
      }
    }
  }
  return bodies;
}

double motion_energy(const Coords& coords) {
  double e = 0.0;
  for (int c = 0; c < coords.channels(); ++c) {
    for (int v = 0; v < coords.joints(); ++v) {
      for (int t = 0; t + 1 < coords.frames(); ++t) {
        const double d = static_cast<double>(coords(c, v, t + 1)) - coords(c, v, t);
        e += d * d;
      }
    }
  }
  return e;
}

SkeletonSequence select_main_actor(std::vector<SkeletonSequence> bodies) {
  if (bodies.empty()) throw SchemaError("clip contains no bodies");
  std::size_t best = 0;
  double best_energy = motion_energy(bodies[0].coords);
  for (std::size_t i = 1; i < bodies.size(); ++i) {
    const double e = motion_energy(bodies[i].coords);
    if (e > best_energy) {
      best = i;
      best_energy = e;
    }
  }
  return std::move(bodies[best]);
}

int NtuFileId::performance_key() const { return ((setup * 1000 + performer) * 10 + replication) * 1000 + action; }

std::optional<NtuFileId> parse_ntu_filename(std::string_view filename) {
  const auto slash = filename.find_last_of("/\\");
  if (slash != std::string_view::npos) filename.remove_prefix(slash + 1);
  // S001C001P001R001A001 = 20 characters
  if (filename.size() < 20) return std::nullopt;
  static constexpr char kTags[] = {'S', 'C', 'P', 'R', 'A'};
  int values[5];
  for (int i = 0; i < 5; ++i) {
    const auto field = filename.substr(static_cast<std::size_t>(i) * 4, 4);
    if (field[0] != kTags[i]) return std::nullopt;
    int v = 0;
    auto [ptr, ec] = std::from_chars(field.data() + 1, field.data() + 4, v);
    if (ec != std::errc() || ptr != field.data() + 4) return std::nullopt;
    values[i] = v;
  }
  const auto rest = filename.substr(20);
  if (!rest.empty() && rest != ".skeleton") return std::nullopt;
  return NtuFileId{values[0], values[1], values[2], values[3], values[4]};
}

NtuProtocol parse_protocol(std::string_view text) {
  if (text == "xsub") return NtuProtocol::xsub;
  if (text == "xview") return NtuProtocol::xview;
  if (text == "xsetup") return NtuProtocol::xsetup;
  throw ConfigError("unknown split '" + std::string(text) + "' (expected xsub, xview or xsetup)");
}

namespace {

std::set<int> read_id_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open split list " + path.string());
  std::set<int> ids;
  std::string line;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ss(line);
    for (int v; ss >> v;) ids.insert(v);
  }
  return ids;
}

}  // namespace

NtuSplitLists NtuSplitLists::load(const std::filesystem::path& dir) {
  return {read_id_list(dir / "xsub_train_subjects.txt"), read_id_list(dir / "xview_train_cameras.txt"),
          read_id_list(dir / "xsetup_train_setups.txt")};
}

bool is_train_split(const NtuFileId& id, NtuProtocol protocol, const NtuSplitLists& lists) {
  switch (protocol) {
    case NtuProtocol::xsub:
      return lists.xsub_train_subjects.contains(id.performer);
    case NtuProtocol::xview:
      return lists.xview_train_cameras.contains(id.camera);
    case NtuProtocol::xsetup:
      return lists.xsetup_train_setups.contains(id.setup);
  }
  return false;
}

void apply_file_id(SkeletonSequence& seq, const NtuFileId& id) {
  seq.label = id.action - 1;
  seq.subject_id = id.performer;
  seq.camera_id = id.camera - 1;
  seq.performance_id = id.performance_key();
}

}  // namespace dcc
