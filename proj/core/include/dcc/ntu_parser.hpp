#pragma once

#include "dcc/skeleton.hpp"

#include <filesystem>
#include <istream>
#include <optional>
#include <set>
#include <string_view>
#include <vector>

namespace dcc {

/// Parses the NTU RGB+D `.skeleton` text layout. Returns one sequence per
/// tracked body id, in order of first appearance, each spanning the whole
/// clip; frames where a body is absent are zero-filled. Only x y z of each
/// joint line are kept.
std::vector<SkeletonSequence> parse_ntu_skeleton(std::istream& in, const SkeletonTopology& topology);

/// Sum over joints, channels and frames of squared frame-to-frame differences.
double motion_energy(const Coords& coords);

/// Keeps the body with the largest motion energy (first one on ties).
SkeletonSequence select_main_actor(std::vector<SkeletonSequence> bodies);

/// Fields of an NTU file name SsssCcccPpppRrrrAaaa (all 1-based).
struct NtuFileId {
  int setup = 0;
  int camera = 0;
  int performer = 0;
  int replication = 0;
  int action = 0;

  /// Same value for every camera of one physical performance.
  int performance_key() const;
};

std::optional<NtuFileId> parse_ntu_filename(std::string_view filename);

enum class NtuProtocol { xsub, xview, xsetup };

NtuProtocol parse_protocol(std::string_view text);

/// Id lists defining the training side of each protocol. Anything not in
/// the list belongs to the test side.
struct NtuSplitLists {
  std::set<int> xsub_train_subjects;
  std::set<int> xview_train_cameras;
  std::set<int> xsetup_train_setups;

  /// Reads xsub_train_subjects.txt, xview_train_cameras.txt and
  /// xsetup_train_setups.txt (whitespace separated integers, '#' comments).
  static NtuSplitLists load(const std::filesystem::path& dir);
};

bool is_train_split(const NtuFileId& id, NtuProtocol protocol, const NtuSplitLists& lists);

/// Sequence metadata derived from the file name: label = action - 1,
/// subject = performer, camera_id = camera - 1.
void apply_file_id(SkeletonSequence& seq, const NtuFileId& id);

}  // namespace dcc
