#pragma once

#include "kinetrace/dataset.hpp"
#include "kinetrace/decoders/mlr.hpp"
#include "kinetrace/decoders/model_file.hpp"
#include "kinetrace/decoders/networks.hpp"
#include "kinetrace/decoders/train.hpp"
#include "kinetrace/errors.hpp"
#include "kinetrace/eval.hpp"
#include "kinetrace/interchange.hpp"
#include "kinetrace/matrix.hpp"
#include "kinetrace/nn/layers.hpp"
#include "kinetrace/nn/optim.hpp"
#include "kinetrace/nn/sequential.hpp"
#include "kinetrace/nn/tensor.hpp"
#include "kinetrace/pipeline.hpp"
#include "kinetrace/preprocess.hpp"
#include "kinetrace/rng.hpp"
#include "kinetrace/signal.hpp"
#include "kinetrace/synthetic.hpp"
