#pragma once

#include "tags/annotations.hpp"
#include "tags/autodiff.hpp"
#include "tags/checkpoint.hpp"
#include "tags/config.hpp"
#include "tags/encoder.hpp"
#include "tags/errors.hpp"
#include "tags/evaluation.hpp"
#include "tags/features.hpp"
#include "tags/gradcheck.hpp"
#include "tags/heads.hpp"
#include "tags/inference.hpp"
#include "tags/interval.hpp"
#include "tags/labels.hpp"
#include "tags/losses.hpp"
#include "tags/matrix.hpp"
#include "tags/model.hpp"
#include "tags/model_config.hpp"
#include "tags/params.hpp"
#include "tags/pipeline.hpp"
#include "tags/synthetic.hpp"
#include "tags/train_config.hpp"
#include "tags/training.hpp"
