#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "fedseg/data/augment.hpp"
#include "fedseg/data/bus_dataset.hpp"
#include "fedseg/data/image_io.hpp"
#include "fedseg/data/partition.hpp"
#include "fedseg/data/phantom.hpp"
#include "fedseg/error.hpp"

using namespace fedseg;
using namespace fedseg::data;
namespace fs = std::filesystem;

namespace {

void expect_valid(const Sample& s) {
  ASSERT_EQ(s.image.size(), static_cast<std::size_t>(s.height * s.width));
  ASSERT_EQ(s.mask.size(), s.image.size());
  std::size_t positive = 0;
  for (double v : s.image) {
    ASSERT_GE(v, 0.0);
    ASSERT_LE(v, 1.0);
  }
  for (auto m : s.mask) {
    ASSERT_TRUE(m == 0 || m == 1);
    positive += m;
  }
  if (s.label == Label::normal) ASSERT_EQ(positive, 0u);
  else ASSERT_GE(positive, 1u);
}

std::map<Label, int> label_counts(const Dataset& d) {
  std::map<Label, int> out;
  for (const auto& s : d) ++out[s.label];
  return out;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fedseg_data_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Sample blank(Label label, int h, int w) {
  Sample s;
  s.label = label;
  s.height = h;
  s.width = w;
  s.image.assign(static_cast<std::size_t>(h * w), 0.0);
  s.mask.assign(s.image.size(), 0);
  return s;
}

}  // namespace

TEST(Labels, NamesRoundTrip) {
  for (Label l : kAllLabels) EXPECT_EQ(parse_label(label_name(l)), l);
  EXPECT_FALSE(parse_label("cancer").has_value());
}

TEST(Phantom, NormalHasEmptyMask) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const auto s = generate_phantom(Label::normal, 64, rng);
    EXPECT_EQ(s.positive_pixels(), 0u);
  }
}

TEST(Phantom, BenignMaskFractionRange) {
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng(seed);
    const auto s = generate_phantom(Label::benign, 64, rng);
    const double frac = static_cast<double>(s.positive_pixels()) / (64.0 * 64.0);
    ASSERT_GE(frac, 0.01) << "seed " << seed;
    ASSERT_LE(frac, 0.35) << "seed " << seed;
  }
}

TEST(Phantom, Deterministic) {
  for (Label l : kAllLabels) {
    Rng a(42), b(42);
    EXPECT_EQ(generate_phantom(l, 32, a), generate_phantom(l, 32, b));
  }
  Rng a(1), b(2);
  EXPECT_NE(generate_phantom(Label::benign, 32, a).image, generate_phantom(Label::benign, 32, b).image);
}

TEST(Phantom, LesionIsDarkerThanSurroundings) {
  double inside = 0, outside = 0;
  std::size_t n_in = 0, n_out = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto s = generate_phantom(seed % 2 ? Label::benign : Label::malignant, 64, rng);
    for (std::size_t i = 0; i < s.image.size(); ++i) {
      if (s.mask[i]) inside += s.image[i], ++n_in;
      else outside += s.image[i], ++n_out;
    }
  }
  EXPECT_LT(inside / n_in, 0.8 * (outside / n_out));
}

TEST(Phantom, TooSmallRejected) {
  Rng rng(0);
  EXPECT_THROW(generate_phantom(Label::benign, 2, rng), ConfigError);
}

TEST(PhantomProperties, TenThousandSamplesAreValid) {
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    Rng rng(derive_seed(777, {seed}));
    const Label l = kAllLabels[seed % 3];
    const int size = seed % 5 == 0 ? 32 : 16;
    const auto s = generate_phantom(l, size, rng);
    ASSERT_EQ(s.label, l);
    ASSERT_NO_FATAL_FAILURE(expect_valid(s));
    ASSERT_NO_THROW(validate_sample(s));
  }
}

TEST(SampleValidation, RejectsBrokenSamples) {
  auto s = blank(Label::benign, 4, 4);
  EXPECT_THROW(validate_sample(s), FormatError);  // lesion label, empty mask
  s.mask[3] = 1;
  EXPECT_NO_THROW(validate_sample(s));
  s.mask[4] = 2;
  EXPECT_THROW(validate_sample(s), FormatError);
  auto n = blank(Label::normal, 4, 4);
  n.image[0] = 1.5;
  EXPECT_THROW(validate_sample(n), FormatError);
}

TEST(Batch, StacksSamples) {
  Dataset d;
  for (int k = 0; k < 3; ++k) {
    auto s = blank(Label::benign, 2, 2);
    s.image[k] = 0.25 * (k + 1);
    s.mask[k] = 1;
    d.push_back(s);
  }
  const std::size_t idx[] = {2, 0};
  const auto b = make_batch(d, idx);
  ASSERT_EQ(b.images.shape(), (numerics::Shape{2, 1, 2, 2}));
  EXPECT_EQ(b.images.data()[2], 0.75);
  EXPECT_EQ(b.images.data()[4], 0.25);
  EXPECT_EQ(b.masks.data()[2], 1.0);
  EXPECT_EQ(b.masks.data()[4], 1.0);
}

TEST(Partition, PaperPlanAtFullScale) {
  auto plan = PartitionPlan::paper_default();
  plan.image_size = 16;
  const auto p = build_partition(plan);
  ASSERT_EQ(p.clients.size(), 3u);
  EXPECT_EQ(p.clients[0].size(), 450u);
  EXPECT_EQ(p.clients[1].size(), 250u);
  EXPECT_EQ(p.clients[2].size(), 163u);
  EXPECT_EQ(p.server_test.size(), 154u);
  EXPECT_EQ(label_counts(p.clients[0]), (std::map<Label, int>{{Label::benign, 400}, {Label::normal, 50}}));
  EXPECT_EQ(label_counts(p.clients[1]), (std::map<Label, int>{{Label::malignant, 200}, {Label::normal, 50}}));
  EXPECT_EQ(label_counts(p.clients[2]), (std::map<Label, int>{{Label::benign, 110}, {Label::malignant, 53}}));
  EXPECT_EQ(label_counts(p.server_test),
            (std::map<Label, int>{{Label::benign, 97}, {Label::malignant, 23}, {Label::normal, 34}}));
  std::set<std::uint64_t> ids;
  std::size_t total = 0;
  for (const auto& c : p.clients)
    for (const auto& s : c) ids.insert(s.id), ++total;
  for (const auto& s : p.server_test) ids.insert(s.id), ++total;
  EXPECT_EQ(ids.size(), total);
}

TEST(Partition, ScaledCounts) {
  EXPECT_EQ(scaled_count(400, 0.2), 80);
  EXPECT_EQ(scaled_count(50, 0.2), 10);
  EXPECT_EQ(scaled_count(53, 0.2), 11);
  EXPECT_EQ(scaled_count(23, 0.2), 5);
  EXPECT_EQ(scaled_count(3, 0.01), 1);
  EXPECT_EQ(scaled_count(0, 0.5), 0);
  auto plan = PartitionPlan::paper_default();
  plan.scale = 0.2;
  plan.image_size = 16;
  const auto p = build_partition(plan);
  EXPECT_EQ(p.clients[0].size(), 90u);
  EXPECT_EQ(label_counts(p.clients[0]), (std::map<Label, int>{{Label::benign, 80}, {Label::normal, 10}}));
  EXPECT_EQ(p.clients[1].size(), 50u);
  EXPECT_EQ(p.clients[2].size(), 33u);
  EXPECT_EQ(p.server_test.size(), 31u);
}

TEST(Partition, Deterministic) {
  auto plan = PartitionPlan::paper_default();
  plan.scale = 0.05;
  plan.image_size = 16;
  plan.seed = 9;
  const auto a = build_partition(plan);
  const auto b = build_partition(plan);
  EXPECT_EQ(a.clients, b.clients);
  EXPECT_EQ(a.server_test, b.server_test);
  plan.seed = 10;
  EXPECT_NE(build_partition(plan).clients[0][0].image, a.clients[0][0].image);
}

TEST(Partition, FromPool) {
  Dataset pool;
  for (int i = 0; i < 30; ++i) {
    Rng rng(i);
    auto s = generate_phantom(kAllLabels[i % 3], 8, rng);
    s.id = 1000 + i;
    pool.push_back(s);
  }
  PartitionPlan plan;
  plan.clients = {parse_composition("benign:4,normal:3", "data.clients"),
                  parse_composition("malignant:5", "data.clients")};
  plan.server_test = parse_composition("benign:2,malignant:2,normal:2", "data.server");
  plan.image_size = 8;
  const auto p = build_partition(plan, pool);
  std::set<std::uint64_t> ids;
  for (const auto& c : p.clients)
    for (const auto& s : c) EXPECT_TRUE(ids.insert(s.id).second);
  for (const auto& s : p.server_test) EXPECT_TRUE(ids.insert(s.id).second);
  EXPECT_EQ(ids.size(), 18u);
  plan.clients[1] = parse_composition("malignant:9", "data.clients");
  try {
    build_partition(plan, pool);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.key(), "data.dir");
  }
}

TEST(Partition, CompositionParsing) {
  const auto c = parse_composition("benign:400, normal:50", "k");
  EXPECT_EQ(c, (Composition{{Label::benign, 400}, {Label::normal, 50}}));
  EXPECT_EQ(format_composition(c), "benign:400,normal:50");
  EXPECT_THROW(parse_composition("benign", "k"), ConfigError);
  EXPECT_THROW(parse_composition("tumor:3", "k"), ConfigError);
  EXPECT_THROW(parse_composition("benign:-1", "k"), ConfigError);
  EXPECT_THROW(parse_composition("", "k"), ConfigError);
}

TEST(Partition, InvalidPlans) {
  auto plan = PartitionPlan::paper_default();
  plan.scale = 0.0;
  EXPECT_THROW(plan.validate(), ConfigError);
  plan = PartitionPlan::paper_default();
  plan.clients.clear();
  EXPECT_THROW(plan.validate(), ConfigError);
}

TEST(Split, EightyTwenty) {
  Dataset d;
  for (int i = 0; i < 100; ++i) {
    auto s = blank(i < 60 ? Label::benign : (i < 85 ? Label::malignant : Label::normal), 2, 2);
    s.id = i;
    d.push_back(s);
  }
  const auto a = train_test_split(d, 0.2, 5);
  EXPECT_EQ(a.train.size(), 80u);
  EXPECT_EQ(a.test.size(), 20u);
  std::set<std::uint64_t> ids;
  for (const auto& s : a.train) ids.insert(s.id);
  for (const auto& s : a.test) EXPECT_TRUE(ids.insert(s.id).second);
  EXPECT_EQ(ids.size(), 100u);
  const auto per_label = label_counts(d);
  const auto test_counts = label_counts(a.test);
  for (const auto& [label, n] : per_label) EXPECT_LE(std::abs(test_counts.at(label) - 0.2 * n), 1.0);
  const auto b = train_test_split(d, 0.2, 5);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
}

TEST(Split, EveryPresentLabelTested) {
  Dataset d;
  for (int i = 0; i < 9; ++i) {
    auto s = blank(i < 8 ? Label::benign : Label::normal, 2, 2);
    s.id = i;
    d.push_back(s);
  }
  const auto sp = train_test_split(d, 0.2, 1);
  EXPECT_EQ(label_counts(sp.test).at(Label::normal), 1);
  EXPECT_THROW(train_test_split(Dataset(d.begin(), d.begin() + 4), 0.2, 1), UsageError);
}

TEST(Augment, DisabledIsIdentity) {
  Rng gen(4);
  const auto s = generate_phantom(Label::malignant, 32, gen);
  Rng rng(11);
  const auto out = augment(s, AugmentationConfig::disabled(), rng);
  EXPECT_EQ(out, s);
  auto cfg = AugmentationConfig{};
  cfg.enabled = false;
  EXPECT_EQ(augment(s, cfg, rng), s);
}

TEST(Augment, HorizontalFlipIsInvolution) {
  Rng gen(4);
  const auto s = generate_phantom(Label::benign, 32, gen);
  GeometricTransform t;
  t.flip_horizontal = true;
  const auto once = apply_geometric(s, t);
  EXPECT_NE(once.image, s.image);
  const auto twice = apply_geometric(once, t);
  for (std::size_t i = 0; i < s.image.size(); ++i) ASSERT_NEAR(twice.image[i], s.image[i], 1e-12);
  EXPECT_EQ(twice.mask, s.mask);
  // Pixel-level check of the flip itself.
  EXPECT_EQ(once.image[0], s.image[31]);
  EXPECT_EQ(once.mask[5 * 32 + 3], s.mask[5 * 32 + 28]);
}

TEST(Augment, QuarterTurnPermutesSquareMask) {
  const int n = 16;
  auto s = blank(Label::benign, n, n);
  for (int y = 3; y < 7; ++y)
    for (int x = 9; x < 13; ++x) s.mask[y * n + x] = 1, s.image[y * n + x] = 0.5;
  GeometricTransform t;
  t.rotation_deg = 90.0;
  const auto r = apply_geometric(s, t);
  EXPECT_EQ(r.positive_pixels(), s.positive_pixels());
  // Compare against both quarter-turn permutations about the center.
  std::vector<std::uint8_t> cw(s.mask.size()), ccw(s.mask.size());
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      cw[x * n + (n - 1 - y)] = s.mask[y * n + x];
      ccw[(n - 1 - x) * n + y] = s.mask[y * n + x];
    }
  EXPECT_TRUE(r.mask == cw || r.mask == ccw);
}

TEST(Augment, PhotometricLeavesMask) {
  Rng gen(6);
  const auto s = generate_phantom(Label::malignant, 16, gen);
  const auto out = apply_photometric(s, {1.2, 0.1});
  EXPECT_EQ(out.mask, s.mask);
  for (std::size_t i = 0; i < s.image.size(); ++i)
    ASSERT_DOUBLE_EQ(out.image[i], std::clamp((s.image[i] - 0.5) * 1.2 + 0.5 + 0.1, 0.0, 1.0));
}

TEST(Augment, Deterministic) {
  Rng gen(6);
  const auto s = generate_phantom(Label::benign, 16, gen);
  Rng a(3), b(3);
  const AugmentationConfig cfg;
  EXPECT_EQ(augment(s, cfg, a), augment(s, cfg, b));
}

TEST(Augment, InvalidConfig) {
  AugmentationConfig cfg;
  cfg.flip_horizontal_p = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = {};
  cfg.scale_min = 1.2;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(AugmentProperties, TenThousandSamplesStayValid) {
  const AugmentationConfig cfg;
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    Rng gen(derive_seed(31, {seed}));
    const Label l = kAllLabels[seed % 3];
    const auto s = generate_phantom(l, 16, gen);
    const auto out = augment(s, cfg, gen);
    ASSERT_EQ(out.label, l);
    ASSERT_EQ(out.id, s.id);
    for (auto m : out.mask) ASSERT_TRUE(m == 0 || m == 1);
    for (double v : out.image) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
    if (l == Label::normal) ASSERT_EQ(out.positive_pixels(), 0u);
  }
}

TEST(ImageIo, PngRoundTrip) {
  const auto dir = scratch_dir("png");
  GrayImage img{5, 3, {}};
  for (int i = 0; i < 15; ++i) img.pixels.push_back(static_cast<std::uint8_t>(i * 17));
  write_png_gray(dir / "a.png", img);
  const auto back = read_png_gray(dir / "a.png");
  EXPECT_EQ(back.width, 5);
  EXPECT_EQ(back.height, 3);
  EXPECT_EQ(back.pixels, img.pixels);
  EXPECT_THROW(read_png_gray(dir / "missing.png"), FormatError);
  std::ofstream(dir / "junk.png") << "not a png";
  EXPECT_THROW(read_png_gray(dir / "junk.png"), FormatError);
}

TEST(ImageIo, ResizeIdentityAndConstant) {
  const std::vector<double> src = {0.0, 0.25, 0.5, 0.75};
  EXPECT_EQ(resize_bilinear(src, 2, 2, 2, 2), src);
  EXPECT_EQ(resize_nearest(src, 2, 2, 2, 2), src);
  const std::vector<double> flat(12, 0.3);
  for (double v : resize_bilinear(flat, 3, 4, 7, 5)) EXPECT_NEAR(v, 0.3, 1e-15);
  const auto up = resize_nearest(src, 2, 2, 4, 4);
  EXPECT_EQ(up[0], 0.0);
  EXPECT_EQ(up[3], 0.25);
  EXPECT_EQ(up[15], 0.75);
}

TEST(BusLoader, LoadsPairs) {
  const auto dir = scratch_dir("bus");
  Dataset d;
  for (int i = 0; i < 3; ++i) {
    Rng rng(i);
    auto s = generate_phantom(kAllLabels[i], 16, rng);
    s.id = i;
    d.push_back(s);
  }
  write_bus_directory(d, dir);
  std::ofstream(dir / "benign" / "notes.txt") << "ignored";
  LoadReport rep;
  const auto loaded = load_bus_directory(dir, 16, &rep);
  ASSERT_EQ(loaded.size(), 3u);
  EXPECT_EQ(rep.loaded, 3u);
  EXPECT_EQ(rep.skipped, 0u);
  for (const auto& s : loaded) {
    ASSERT_NO_FATAL_FAILURE(expect_valid(s));
    const auto& orig = d[static_cast<std::size_t>(s.label)];
    EXPECT_EQ(s.mask, orig.mask);
    for (std::size_t i = 0; i < s.image.size(); ++i) ASSERT_NEAR(s.image[i], orig.image[i], 0.5 / 255 + 1e-12);
  }
  const auto small = load_bus_directory(dir, 8);
  EXPECT_EQ(small[0].image.size(), 64u);
}

TEST(BusLoader, MissingMaskNamesFile) {
  const auto dir = scratch_dir("missing");
  fs::create_directories(dir / "benign");
  write_png_gray(dir / "benign" / "case7.png", GrayImage{4, 4, std::vector<std::uint8_t>(16, 100)});
  try {
    load_bus_directory(dir, 4);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("case7.png"), std::string::npos);
  }
}

TEST(BusLoader, WhiteMaskIsAllOnes) {
  const auto dir = scratch_dir("white");
  fs::create_directories(dir / "malignant");
  write_png_gray(dir / "malignant" / "x.png", GrayImage{6, 6, std::vector<std::uint8_t>(36, 80)});
  write_png_gray(dir / "malignant" / "x_mask.png", GrayImage{6, 6, std::vector<std::uint8_t>(36, 255)});
  const auto d = load_bus_directory(dir, 4);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].label, Label::malignant);
  EXPECT_EQ(d[0].positive_pixels(), 16u);
  for (double v : d[0].image) EXPECT_NEAR(v, 80.0 / 255.0, 1e-12);
}

TEST(BusLoader, UnreadableFileSkipped) {
  const auto dir = scratch_dir("bad");
  fs::create_directories(dir / "benign");
  std::ofstream(dir / "benign" / "bad.png") << "garbage";
  std::ofstream(dir / "benign" / "bad_mask.png") << "garbage";
  write_png_gray(dir / "benign" / "ok.png", GrayImage{4, 4, std::vector<std::uint8_t>(16, 10)});
  GrayImage m{4, 4, std::vector<std::uint8_t>(16, 0)};
  m.pixels[5] = 255;
  write_png_gray(dir / "benign" / "ok_mask.png", m);
  LoadReport rep;
  const auto d = load_bus_directory(dir, 4, &rep);
  EXPECT_EQ(d.size(), 1u);
  EXPECT_EQ(rep.skipped, 1u);
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_NE(rep.warnings[0].find("bad"), std::string::npos);
}
