#include "curvebench/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "curvebench/rng.hpp"

namespace curvebench {

std::vector<Tensor> all_logit_gradients(const Classifier& model, const Tensor& image) {
  const int c = model.class_count();
  std::vector<Tensor> grads;
  grads.reserve(static_cast<std::size_t>(c));
  std::vector<double> w(static_cast<std::size_t>(c), 0.0);
  for (int k = 0; k < c; ++k) {
    w[static_cast<std::size_t>(k)] = 1.0;
    grads.push_back(model.logit_gradient(image, w));
    w[static_cast<std::size_t>(k)] = 0.0;
  }
  return grads;
}

int predicted_class(const Classifier& model, const Tensor& image) {
  return static_cast<int>(argmax_index(model.logits(image).values()));
}

namespace {

Shape layer_output_shape(const LayerSpec& l, const Shape& in, std::size_t index) {
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("model: layer " + std::to_string(index) + ": " + why +
                                " (input " + shape_str(in) + ")");
  };
  switch (l.kind) {
    case LayerSpec::Kind::Dense: {
      if (in.size() != 1) fail("dense expects a flat input");
      return {static_cast<std::size_t>(l.units)};
    }
    case LayerSpec::Kind::Conv: {
      if (in.size() != 3) fail("conv expects CxHxW input");
      const long h = static_cast<long>(in[1]) + 2 * l.pad - l.ksize;
      const long w = static_cast<long>(in[2]) + 2 * l.pad - l.ksize;
      if (h < 0 || w < 0) fail("conv kernel larger than padded input");
      return {static_cast<std::size_t>(l.units), static_cast<std::size_t>(h / l.stride + 1),
              static_cast<std::size_t>(w / l.stride + 1)};
    }
    case LayerSpec::Kind::Relu:
      return in;
    case LayerSpec::Kind::MaxPool: {
      if (in.size() != 3) fail("maxpool expects CxHxW input");
      if (in[1] % 2 != 0 || in[2] % 2 != 0) fail("maxpool needs even spatial extents");
      return {in[0], in[1] / 2, in[2] / 2};
    }
    case LayerSpec::Kind::Flatten:
      return {shape_numel(in)};
  }
  fail("unknown layer kind");
  return {};
}

}  // namespace

void Model::build(const Shape& input_shape, int classes, std::vector<LayerSpec> layers) {
  if (classes < 2) throw std::invalid_argument("model: need at least 2 classes");
  input_shape_ = input_shape;
  classes_ = classes;
  layers_ = std::move(layers);
  params_.clear();
  Shape cur = input_shape_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    Shape next = layer_output_shape(l, cur, i);
    if (l.kind == LayerSpec::Kind::Dense) {
      params_.push_back(Tensor::zeros({static_cast<std::size_t>(l.units), cur[0]}));
      params_.push_back(Tensor::zeros({static_cast<std::size_t>(l.units)}));
    } else if (l.kind == LayerSpec::Kind::Conv) {
      params_.push_back(Tensor::zeros({static_cast<std::size_t>(l.units), cur[0],
                                       static_cast<std::size_t>(l.ksize),
                                       static_cast<std::size_t>(l.ksize)}));
      params_.push_back(Tensor::zeros({static_cast<std::size_t>(l.units)}));
    }
    cur = std::move(next);
  }
  if (cur.size() != 1 || cur[0] != static_cast<std::size_t>(classes_)) {
    throw std::invalid_argument("model: network output " + shape_str(cur) + " does not match " +
                                std::to_string(classes_) + " classes");
  }
}

Model Model::make(const std::string& arch, const Shape& input_shape, int classes,
                  std::uint64_t seed) {
  Model m;
  std::vector<LayerSpec> layers;
  auto dense = [](int units) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::Dense;
    l.units = units;
    return l;
  };
  auto conv = [](int ch, int k, int stride, int pad) {
    LayerSpec l;
    l.kind = LayerSpec::Kind::Conv;
    l.units = ch;
    l.ksize = k;
    l.stride = stride;
    l.pad = pad;
    return l;
  };
  auto simple = [](LayerSpec::Kind kind) {
    LayerSpec l;
    l.kind = kind;
    return l;
  };
  if (arch == "mlp-2x64") {
    layers = {simple(LayerSpec::Kind::Flatten), dense(64), simple(LayerSpec::Kind::Relu),
              dense(64), simple(LayerSpec::Kind::Relu), dense(classes)};
  } else if (arch == "cnn-small") {
    layers = {conv(8, 3, 1, 1),
              simple(LayerSpec::Kind::Relu),
              simple(LayerSpec::Kind::MaxPool),
              conv(16, 3, 1, 1),
              simple(LayerSpec::Kind::Relu),
              simple(LayerSpec::Kind::MaxPool),
              simple(LayerSpec::Kind::Flatten),
              dense(classes)};
  } else if (arch == "linear") {
    layers = {simple(LayerSpec::Kind::Flatten), dense(classes)};
  } else {
    throw std::invalid_argument("model: unknown architecture '" + arch + "'");
  }
  m.build(input_shape, classes, std::move(layers));
  m.arch_name_ = arch;
  m.random_init(seed);
  return m;
}

void Model::random_init(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x1417));
  for (std::size_t p = 0; p < params_.size(); p += 2) {
    Tensor& w = params_[p];
    std::size_t fan_in = 1;
    for (std::size_t i = 1; i < w.rank(); ++i) fan_in *= w.shape()[i];
    const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = std_dev * rng.normal();
    Tensor& b = params_[p + 1];
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.0;
  }
}

std::string Model::descriptor() const {
  std::ostringstream os;
  os << "input";
  for (std::size_t e : input_shape_) os << " " << e;
  os << " classes " << classes_ << "\n";
  os << "arch " << arch_name_ << "\n";
  for (const LayerSpec& l : layers_) {
    switch (l.kind) {
      case LayerSpec::Kind::Dense:
        os << "dense " << l.units << "\n";
        break;
      case LayerSpec::Kind::Conv:
        os << "conv " << l.units << " " << l.ksize << " " << l.stride << " " << l.pad << "\n";
        break;
      case LayerSpec::Kind::Relu:
        os << "relu\n";
        break;
      case LayerSpec::Kind::MaxPool:
        os << "maxpool\n";
        break;
      case LayerSpec::Kind::Flatten:
        os << "flatten\n";
        break;
    }
  }
  return os.str();
}

Model Model::from_descriptor(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  Shape input_shape;
  int classes = 0;
  std::string arch_name = "custom";
  std::vector<LayerSpec> layers;
  bool have_header = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    if (tok == "input") {
      std::vector<long> nums;
      std::string word;
      while (ls >> word) {
        if (word == "classes") {
          if (!(ls >> classes)) throw std::invalid_argument("model descriptor: missing class count");
          break;
        }
        nums.push_back(std::stol(word));
      }
      for (long v : nums) {
        if (v <= 0) throw std::invalid_argument("model descriptor: non-positive input extent");
        input_shape.push_back(static_cast<std::size_t>(v));
      }
      have_header = true;
    } else if (tok == "arch") {
      ls >> arch_name;
    } else if (tok == "dense") {
      LayerSpec l;
      l.kind = LayerSpec::Kind::Dense;
      if (!(ls >> l.units) || l.units <= 0) {
        throw std::invalid_argument("model descriptor: bad dense units in '" + line + "'");
      }
      layers.push_back(l);
    } else if (tok == "conv") {
      LayerSpec l;
      l.kind = LayerSpec::Kind::Conv;
      if (!(ls >> l.units >> l.ksize >> l.stride >> l.pad) || l.units <= 0 || l.ksize <= 0 ||
          l.stride <= 0 || l.pad < 0) {
        throw std::invalid_argument("model descriptor: bad conv spec in '" + line + "'");
      }
      layers.push_back(l);
    } else if (tok == "relu") {
      layers.push_back({LayerSpec::Kind::Relu, 0, 0, 1, 0});
    } else if (tok == "maxpool") {
      layers.push_back({LayerSpec::Kind::MaxPool, 0, 0, 1, 0});
    } else if (tok == "flatten") {
      layers.push_back({LayerSpec::Kind::Flatten, 0, 0, 1, 0});
    } else {
      throw std::invalid_argument("model descriptor: unknown token '" + tok + "'");
    }
  }
  if (!have_header || input_shape.empty() || classes < 2) {
    throw std::invalid_argument("model descriptor: missing or invalid input header");
  }
  Model m;
  m.build(input_shape, classes, std::move(layers));
  m.arch_name_ = arch_name;
  return m;
}

Tape::Id Model::forward(Tape& tape, Tape::Id input, std::vector<Tape::Id>* param_ids) const {
  const Tensor& in_value = tape.value(input);
  if (in_value.shape() != input_shape_) {
    throw std::invalid_argument("model: input shape " + shape_str(in_value.shape()) +
                                " does not match expected " + shape_str(input_shape_));
  }
  Tape::Id cur = input;
  std::size_t p = 0;
  for (const LayerSpec& l : layers_) {
    switch (l.kind) {
      case LayerSpec::Kind::Dense: {
        const Tape::Id w = tape.leaf(params_[p]);
        const Tape::Id b = tape.leaf(params_[p + 1]);
        if (param_ids) {
          param_ids->push_back(w);
          param_ids->push_back(b);
        }
        p += 2;
        cur = tape.bias_add(tape.matmul(w, cur), b);
        break;
      }
      case LayerSpec::Kind::Conv: {
        const Tape::Id k = tape.leaf(params_[p]);
        const Tape::Id b = tape.leaf(params_[p + 1]);
        if (param_ids) {
          param_ids->push_back(k);
          param_ids->push_back(b);
        }
        p += 2;
        cur = tape.bias_add(tape.conv2d(cur, k, l.stride, l.pad), b);
        break;
      }
      case LayerSpec::Kind::Relu:
        cur = tape.relu(cur);
        break;
      case LayerSpec::Kind::MaxPool:
        cur = tape.maxpool2x2(cur);
        break;
      case LayerSpec::Kind::Flatten:
        cur = tape.flatten(cur);
        break;
    }
  }
  return cur;
}

Tensor Model::logits(const Tensor& image) const {
  Tape tape;
  const Tape::Id in = tape.leaf(image);
  return tape.value(forward(tape, in));
}

Tensor Model::logit_gradient(const Tensor& image, std::span<const double> weights) const {
  Tape tape;
  const Tape::Id in = tape.leaf(image);
  const Tape::Id out = forward(tape, in);
  const Tape::Id combined =
      tape.weighted_sum(out, std::vector<double>(weights.begin(), weights.end()));
  GradientMap grads = tape.backward(combined);
  return grads.at(in);
}

PreprocessedClassifier::PreprocessedClassifier(const Classifier& model,
                                               std::shared_ptr<const LinearOp> pre)
    : model_(model), pre_(std::move(pre)) {
  if (!pre_) throw std::invalid_argument("preprocessed classifier: null preprocessing op");
}

Shape PreprocessedClassifier::input_shape() const { return model_.input_shape(); }

int PreprocessedClassifier::class_count() const { return model_.class_count(); }

Tensor PreprocessedClassifier::logits(const Tensor& image) const {
  return model_.logits(pre_->apply(image));
}

Tensor PreprocessedClassifier::logit_gradient(const Tensor& image,
                                              std::span<const double> weights) const {
  const Tensor inner = pre_->apply(image);
  return pre_->apply_transpose(model_.logit_gradient(inner, weights));
}

std::vector<double> class_score_along(const Classifier& model, const Tensor& image,
                                      const Tensor& direction, int target_class,
                                      std::span<const double> s_grid) {
  if (target_class < 0 || target_class >= model.class_count()) {
    throw std::invalid_argument("class_score_along: class " + std::to_string(target_class) +
                                " out of range");
  }
  const double norm = direction.l2_norm();
  if (norm == 0.0) throw std::invalid_argument("class_score_along: zero direction");
  Tensor unit = (1.0 / norm) * direction;
  if (unit.shape() != image.shape()) unit = unit.reshaped(image.shape());
  std::vector<double> out;
  out.reserve(s_grid.size());
  for (double s : s_grid) {
    Tensor probe = image;
    axpy_in_place(probe, s, unit);
    out.push_back(model.logits(probe)[static_cast<std::size_t>(target_class)]);
  }
  return out;
}

}  // namespace curvebench
