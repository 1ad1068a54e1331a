#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "mancap/dataset.hpp"
#include "mancap/embx.hpp"
#include "mancap/rng.hpp"

namespace mancap {
namespace {

EmbeddingTensor tiny_tensor() {
  EmbeddingTensor t;
  t.header.shape = {1, 1, 1};
  t.header.label_schemes["s"] = {"a"};
  t.data = {0.0f};
  return t;
}

std::string to_bytes(const EmbeddingTensor& t) {
  std::ostringstream out(std::ios::binary);
  write_embx(t, out);
  return out.str();
}

EmbeddingTensor from_bytes(const std::string& bytes) {
  std::istringstream in(bytes, std::ios::binary);
  return read_embx(in);
}

std::uint64_t header_len(const std::string& bytes) {
  std::uint64_t h = 0;
  for (int i = 7; i >= 0; --i) h = (h << 8) | static_cast<unsigned char>(bytes[5 + i]);
  return h;
}

TEST(Embx, SmallestTensorFileSize) {
  const auto bytes = to_bytes(tiny_tensor());
  const auto h = header_len(bytes);
  EXPECT_EQ(bytes.size(), 4 + 1 + 8 + h + 4);
  EXPECT_EQ(bytes.substr(0, 4), "EMBX");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 0x01);
}

TEST(Embx, FullScaleDataSectionArithmetic) {
  const EmbxShape shape{33, 500, 4096};
  EXPECT_EQ(shape.element_count() * 4, 270336000u);
}

TEST(Embx, WriteReturnsByteCount) {
  EmbeddingTensor t = tiny_tensor();
  t.header.shape = {2, 3, 4};
  t.header.label_schemes["s"] = {"a", "b", "a"};
  t.data.assign(24, 1.5f);
  std::ostringstream out(std::ios::binary);
  const auto n = write_embx(t, out);
  EXPECT_EQ(n, out.str().size());
  EXPECT_EQ(n - 13 - header_len(out.str()), 24u * 4u);
}

TEST(Embx, LabelLengthMismatchIsValidationError) {
  EmbeddingTensor t = tiny_tensor();
  t.header.shape = {1, 3, 1};
  t.data = {1, 2, 3};
  t.header.label_schemes = {{"sentiment", {"a", "b"}}};
  std::ostringstream out;
  try {
    write_embx(t, out);
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("label_schemes[sentiment] length mismatch"),
              std::string::npos);
  }
}

TEST(Embx, ConditionParamsRequiredPerCondition) {
  EmbeddingTensor t = tiny_tensor();
  t.header.condition = Condition::demonstrations;
  t.header.condition_params = {{"num_demonstrations", 5}};
  std::ostringstream out;
  EXPECT_THROW(write_embx(t, out), ValidationError);
  t.header.condition_params["demo_seed"] = 1;
  EXPECT_NO_THROW(write_embx(t, out));

  t.header.condition = Condition::soft_prompt;
  t.header.condition_params = {{"soft_prompt_length", 5}};
  EXPECT_THROW(write_embx(t, out), ValidationError);
}

TEST(Embx, ZeroShapeRejected) {
  EmbeddingTensor t = tiny_tensor();
  t.header.shape = {1, 1, 0};
  t.data.clear();
  std::ostringstream out;
  EXPECT_THROW(write_embx(t, out), ValidationError);
}

TEST(Embx, BadMagicIsFormatError) {
  auto bytes = to_bytes(tiny_tensor());
  bytes.replace(0, 4, "XMBE");
  EXPECT_THROW(from_bytes(bytes), FormatError);
}

TEST(Embx, UnknownVersionIsFormatError) {
  auto bytes = to_bytes(tiny_tensor());
  bytes[4] = 2;
  EXPECT_THROW(from_bytes(bytes), FormatError);
}

TEST(Embx, NanReportsFlatIndex) {
  EmbeddingTensor t = tiny_tensor();
  t.header.shape = {1, 2, 5};
  t.header.label_schemes["s"] = {"a", "b"};
  t.data.assign(10, 0.25f);
  auto bytes = to_bytes(t);
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const auto offset = bytes.size() - 10 * 4 + 7 * 4;
  std::memcpy(bytes.data() + offset, &nan, 4);
  try {
    from_bytes(bytes);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.flat_index(), 7u);
  }
}

TEST(Embx, InfinityRejected) {
  auto bytes = to_bytes(tiny_tensor());
  const float inf = std::numeric_limits<float>::infinity();
  std::memcpy(bytes.data() + bytes.size() - 4, &inf, 4);
  EXPECT_THROW(from_bytes(bytes), DataError);
}

TEST(Embx, TruncatedPayloadIsLengthError) {
  auto bytes = to_bytes(tiny_tensor());
  bytes.pop_back();
  EXPECT_THROW(from_bytes(bytes), LengthError);
  EXPECT_THROW(from_bytes(bytes.substr(0, 10)), LengthError);
}

TEST(Embx, TrailingBytesRejected) {
  auto bytes = to_bytes(tiny_tensor()) + "x";
  EXPECT_THROW(from_bytes(bytes), FormatError);
}

TEST(Embx, MalformedHeaderJsonIsFormatError) {
  auto bytes = to_bytes(tiny_tensor());
  bytes[13] = '[';
  EXPECT_THROW(from_bytes(bytes), FormatError);
}

TEST(Embx, HeaderReadableWithoutPayload) {
  EmbeddingTensor t = tiny_tensor();
  t.header.model_name = "tiny";
  auto bytes = to_bytes(t);
  bytes.resize(bytes.size() - 4);  // drop the payload entirely
  std::istringstream in(bytes, std::ios::binary);
  const auto h = read_embx_header(in);
  EXPECT_EQ(h.model_name, "tiny");
  EXPECT_EQ(h.shape, (EmbxShape{1, 1, 1}));
}

// Fixed bytes: little-endian length and payload regardless of host.
TEST(Embx, GoldenBytes) {
  EmbeddingTensor t;
  t.header.shape = {1, 1, 2};
  t.header.label_schemes["s"] = {"a"};
  t.header.model_name = "m";
  t.data = {1.0f, -2.0f};
  const std::string header =
      R"({"condition":"raw","condition_params":{},"dtype":"f32","embedding_kind":"sentence_mean",)"
      R"("format_version":1,"label_schemes":{"s":["a"]},"layer_index_base":0,"model_name":"m",)"
      R"("shape":[1,1,2]})";
  std::string expected = "EMBX";
  expected += '\x01';
  std::uint64_t h = header.size();
  for (int i = 0; i < 8; ++i) expected += static_cast<char>((h >> (8 * i)) & 0xff);
  expected += header;
  expected += std::string("\x00\x00\x80\x3f\x00\x00\x00\xc0", 8);
  EXPECT_EQ(to_bytes(t), expected);
  EXPECT_EQ(from_bytes(expected), t);
}

// Property: read(write(t)) == t and rewriting reproduces the bytes.
TEST(Embx, RoundTripProperty) {
  Rng rng(42);
  for (int iter = 0; iter < 50; ++iter) {
    EmbeddingTensor t;
    auto& h = t.header;
    h.shape = {1 + rng.below(3), 1 + rng.below(6), 1 + rng.below(7)};
    h.embedding_kind = rng.below(2) ? EmbeddingKind::last_token : EmbeddingKind::sentence_mean;
    h.condition = static_cast<Condition>(rng.below(4));
    if (h.condition == Condition::demonstrations)
      h.condition_params = {{"num_demonstrations", rng.below(40) + 1}, {"demo_seed", rng.below(3)},
                            {"task", "sentiment"}};
    if (h.condition == Condition::soft_prompt)
      h.condition_params = {{"soft_prompt_length", 5}, {"checkpoint_index", rng.below(50)}};
    h.model_name = "model-" + std::to_string(iter) + " \xc3\xa9";
    h.layer_index_base = static_cast<int>(rng.below(2));
    for (int s = 0; s < 1 + static_cast<int>(rng.below(3)); ++s) {
      auto& labels = h.label_schemes["scheme" + std::to_string(s)];
      for (std::uint64_t i = 0; i < h.shape.num_points; ++i)
        labels.push_back("L" + std::to_string(rng.below(4)));
    }
    for (std::uint64_t i = 0; i < h.shape.element_count(); ++i)
      t.data.push_back(static_cast<float>(rng.normal() * 1e3));

    const auto bytes = to_bytes(t);
    const auto back = from_bytes(bytes);
    ASSERT_EQ(back, t);
    ASSERT_EQ(to_bytes(back), bytes);
  }
}

TEST(Embx, FileRoundTrip) {
  const auto path = testing::TempDir() + "tiny.embx";
  EmbeddingTensor t = tiny_tensor();
  write_embx_file(t, path);
  EXPECT_EQ(read_embx_file(path), t);
  EXPECT_THROW(read_embx_file(testing::TempDir() + "does/not/exist.embx"), IoError);
}

std::string dataset_line(const std::string& text, const std::string& sentiment,
                         const std::string& topic, const std::string& intent,
                         const std::string& split) {
  nlohmann::json j{{"text", text},
                   {"labels", {{"sentiment", sentiment}, {"topic", topic}, {"intent", intent}}},
                   {"split", split}};
  return j.dump() + "\n";
}

TEST(Dataset, ThousandRecordsThreeSchemes) {
  const char* sentiments[] = {"Joy", "Sadness", "Fear", "Anger", "Surprise"};
  const char* topics[] = {"Sports", "Science", "Politics", "Food", "Travel"};
  const char* intents[] = {"Inform", "Ask", "Request", "Complain", "Praise"};
  std::string text;
  for (const char* split : {"train", "test"})
    for (int c = 0; c < 5; ++c)
      for (int i = 0; i < 100; ++i)
        text += dataset_line("sentence " + std::to_string(i), sentiments[c], topics[(c + i) % 5],
                             intents[(c + 2 * i) % 5], split);
  std::istringstream in(text);
  const auto ds = load_labeled_dataset(in, {"sentiment", "topic", "intent"});
  ASSERT_EQ(ds.records.size(), 1000u);
  EXPECT_EQ(ds.split(Split::train).size(), 500u);
  EXPECT_EQ(ds.split(Split::test).size(), 500u);
  std::map<std::string, int> per_category;
  for (const auto* r : ds.split(Split::test)) ++per_category[r->labels.at("sentiment")];
  for (const auto& [cat, n] : per_category) EXPECT_EQ(n, 100) << cat;
}

TEST(Dataset, EmptyStreamIsEmptyDataset) {
  std::istringstream in("");
  EXPECT_TRUE(load_labeled_dataset(in, {"sentiment"}).records.empty());
}

TEST(Dataset, MissingSchemeReportsLine) {
  std::string text = dataset_line("a", "Joy", "Food", "Ask", "train");
  text += "\n";  // blank lines are skipped but still counted
  text += R"({"text": "b", "labels": {"sentiment": "Joy", "intent": "Ask"}, "split": "test"})";
  text += "\n";
  std::istringstream in(text);
  try {
    load_labeled_dataset(in, {"sentiment", "topic"});
    FAIL() << "expected SchemaError";
  } catch (const SchemaError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("topic"), std::string::npos);
  }
}

TEST(Dataset, BadSplitRejected) {
  std::istringstream in(R"({"text": "a", "labels": {}, "split": "dev"})");
  EXPECT_THROW(load_labeled_dataset(in, {}), SchemaError);
}

}  // namespace
}  // namespace mancap
