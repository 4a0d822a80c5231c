#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "nasoa/random.h"

namespace nasoa {

// ---------------------------------------------------------------------------
// Alphabet
// ---------------------------------------------------------------------------

enum class OpCode : std::uint8_t {
  kConv3x3 = 0,
  kConv1x1 = 1,
  kConv3x3Group2 = 2,
  kConv3x3Group4 = 3,
  kConv3x3Depthwise = 4,  // groups = input channels
};

inline constexpr int kNumOps = 5;
inline constexpr int kNumRatios = 5;
inline constexpr int kMaxOps = 3;
inline constexpr int kMaxSkips = 3;

/// Channel-change ratio id 0..4 meaning x1/4, x1/2, x1, x2, x4.
struct ChannelRatio {
  std::uint8_t id = 2;

  /// Multiplier as an exact fraction num/den.
  constexpr int numerator() const { return id >= 2 ? (1 << (id - 2)) : 1; }
  constexpr int denominator() const { return id >= 2 ? 1 : (1 << (2 - id)); }
  constexpr double value() const { return static_cast<double>(numerator()) / denominator(); }

  friend constexpr auto operator<=>(ChannelRatio, ChannelRatio) = default;
};

const char* op_name(OpCode op);
int op_kernel(OpCode op);

enum class MergeKind : std::uint8_t { kAdd = 0, kConcat = 1 };

/// Explicit skip between positions `from` and `to` of a block. Position 0 is
/// the block input and position k is the output of the k-th operator.
struct SkipSpec {
  MergeKind kind = MergeKind::kAdd;
  int from = 0;
  int to = 1;

  friend constexpr auto operator<=>(const SkipSpec&, const SkipSpec&) = default;
};

struct BlockSpec {
  std::vector<OpCode> ops;             // 1..3 operators
  std::vector<ChannelRatio> ratios;    // ops.size() - 1 entries
  std::vector<SkipSpec> skips;         // canonical order, <= 3

  int num_ops() const { return static_cast<int>(ops.size()); }
  bool operator==(const BlockSpec&) const = default;
};

struct MacroSpec {
  std::array<std::vector<int>, 4> stages;

  int total_blocks() const;
  bool operator==(const MacroSpec&) const = default;
};

struct ArchitectureSpec {
  BlockSpec block;
  int first_channel = 64;
  MacroSpec macro;

  bool operator==(const ArchitectureSpec&) const = default;
};

// ---------------------------------------------------------------------------
// Parsing / serialization
// ---------------------------------------------------------------------------

enum class ParseErrorKind {
  kMissingSeparator,
  kExtraSeparator,
  kEmptyOperators,
  kBadCharacter,
  kEvenOperatorLength,
  kTooManyOperators,
  kOpOutOfRange,
  kRatioOutOfRange,
  kBadSkipLength,
  kBadSkipKind,
  kSkipOutOfRange,
  kSkipReversed,
  kImplicitSkip,
  kDuplicateSkip,
  kTooManySkips,
  kFieldCount,
  kBadFirstChannel,
  kStageCount,
  kEmptyStage,
  kZeroMultiplier,
};

const char* to_string(ParseErrorKind kind);

class ParseError : public std::runtime_error {
 public:
  ParseError(ParseErrorKind kind, const std::string& detail);
  ParseErrorKind kind() const { return kind_; }

 private:
  ParseErrorKind kind_;
};

/// Sorts skips into canonical (from, to, kind) order and checks every grammar
/// invariant. Throws ParseError on violation.
BlockSpec make_block(std::vector<OpCode> ops, std::vector<ChannelRatio> ratios,
                     std::vector<SkipSpec> skips);

BlockSpec parse_block(std::string_view text);
std::string serialize_block(const BlockSpec& b);

MacroSpec parse_macro(std::string_view text);
std::string serialize_macro(const MacroSpec& m);

ArchitectureSpec parse_architecture(std::string_view text);
std::string serialize_architecture(const ArchitectureSpec& a);

/// ResNet50's macro; the block-level search phase keeps it fixed.
MacroSpec resnet50_macro();

// ---------------------------------------------------------------------------
// Validity
// ---------------------------------------------------------------------------

/// How an explicit 'a' skip treats operands with different channel counts.
enum class AddMergePolicy {
  /// A 1x1 projection (with stride when resolutions differ) maps the skip
  /// source onto the destination width. Several published encodings rely on
  /// this, e.g. "02031-a02".
  kProject,
  /// Channel counts must match exactly; a mismatch is a violation.
  kStrict,
};

struct ValidityRules {
  AddMergePolicy add_merge = AddMergePolicy::kProject;

  static ValidityRules strict() { return {AddMergePolicy::kStrict}; }
};

enum class ViolationKind {
  kNoStrideHost,
  kAddChannelMismatch,
  kGroupingMismatch,
  kFractionalChannels,
};

const char* to_string(ViolationKind kind);

struct Violation {
  ViolationKind kind;
  int stage = 0;        // 1-based
  int block_index = 0;  // 0-based within stage
  std::string detail;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport validate(const ArchitectureSpec& a, const ValidityRules& rules = {});

/// Channel widths at every position of one block instance. `points[k]` is the
/// width flowing forward from position k after merges, `op_in[k]`/`op_out[k]`
/// are the input/output width of operator k+1.
struct BlockChannels {
  std::vector<long> op_in;
  std::vector<long> op_out;
  std::vector<long> points;
  bool fractional = false;
};

BlockChannels infer_block_channels(const BlockSpec& b, long in_channels, long out_channels);

/// Channels entering and leaving every block, in network order.
struct BlockPlan {
  int stage = 0;        // 1-based
  int index = 0;        // within stage
  long in_channels = 0;
  long out_channels = 0;
  bool downsample = false;
};

std::vector<BlockPlan> plan_blocks(const ArchitectureSpec& a);

/// Index of the operator receiving stride 2 in a down-sampling block.
std::optional<int> stride_host(const BlockSpec& b);

// ---------------------------------------------------------------------------
// Space counting
// ---------------------------------------------------------------------------

enum class CountConvention {
  /// Distinct canonical BlockSpecs under this grammar (set semantics on skips).
  kCanonical,
  /// Every one of `max_skips` slots picks any (from, to, kind) triple over all
  /// position pairs, order and repetition counted; operator count fixed.
  kSlots,
};

struct SpaceLimits {
  int min_ops = 1;
  int max_ops = kMaxOps;
  int num_ops = kNumOps;
  int num_ratios = kNumRatios;
  int max_skips = kMaxSkips;
  int merge_kinds = 2;
  CountConvention convention = CountConvention::kCanonical;
};

std::uint64_t count_block_space(const SpaceLimits& limits);

// ---------------------------------------------------------------------------
// Mutation
// ---------------------------------------------------------------------------

enum class BlockMutationKind { kReplaceOp, kChangeRatio, kAddSkip, kRemoveSkip, kModifySkip };
enum class MacroMutationKind { kAddOne, kRemoveOne, kSwapAdjacent, kChangeFirstChannel };

inline constexpr std::array<int, 3> kFirstChannelChoices{32, 64, 128};

/// Every explicit skip legal inside a block of n operators.
std::vector<SkipSpec> legal_skips(int num_ops);

bool applicable(const BlockSpec& b, BlockMutationKind kind);
bool applicable(const MacroSpec& m, int first_channel, MacroMutationKind kind);

/// Applies one mutation of the given kind; the kind must be applicable.
BlockSpec mutate_block(const BlockSpec& b, BlockMutationKind kind, Rng& rng);
/// Draws the kind uniformly over applicable kinds.
BlockSpec mutate_block(const BlockSpec& b, Rng& rng);

struct MacroMutation {
  MacroSpec macro;
  int first_channel;
};

MacroMutation mutate_macro(const MacroSpec& m, int first_channel, MacroMutationKind kind, Rng& rng);
MacroMutation mutate_macro(const MacroSpec& m, int first_channel, Rng& rng);

/// Uniform random block: op count, operators, ratios, skip count and skips are
/// drawn independently.
BlockSpec random_block(Rng& rng);

/// Random macro as in the macro-level random initializer: total blocks drawn
/// from [min_blocks, max_blocks], last width from {512, 1024, 2048}, doubling
/// blocks placed at random positions.
MacroMutation random_macro(Rng& rng, int min_blocks = 10, int max_blocks = 50);

}  // namespace nasoa
