"""Camera-to-speech scene narration with desk-scale model-optimization math.

The pipeline samples frames in short bursts on a fixed cycle, ranges detected
objects with pinhole geometry, tracks them across the burst for headings,
renders one prioritized sentence, and dispatches it to a speech service.
Alongside it, the quantization and finetune modules implement the weight
compression and two-head training objectives as small, fully testable
libraries.
"""

from .describe import (
    DescriberConfig,
    ObjectGroup,
    SceneDescription,
    group_and_prioritize,
    render_description,
)
from .finetune import (
    EarlyStopMonitor,
    LabeledSample,
    TinyTwoHeadModel,
    TrainingConfig,
    classification_loss,
    combined_loss,
    early_stopping_step,
    finite_diff_grad_check,
    loss_gradient,
    regression_loss,
    regularized_loss,
    sgd_step,
    train,
)
from .perception import (
    Detection,
    HttpDetector,
    ScriptedDetector,
    detect,
    load_script,
    mock_detect,
)
from .pipeline import (
    CycleMetrics,
    PipelineConfig,
    load_config,
    run,
    run_cycle,
)
from .quantization import (
    LayerSpec,
    QuantizedTensor,
    QuantParams,
    compute_scale,
    dequantize,
    quantize,
    quantize_per_channel,
    size_report,
)
from .ranging import (
    CameraModel,
    Direction,
    Heading,
    HeightRegistry,
    RangedObject,
    Track,
    associate_and_heading,
    calibrate_focal_length,
    direction_of,
    estimate_distance,
    image_height,
)
from .scheduling import (
    BatchScheduler,
    DirectorySource,
    Frame,
    FrameBatch,
    MonotonicClock,
    SchedulerConfig,
    SimulatedClock,
    SyntheticSource,
)
from .tts import (
    Prosody,
    SpeechDispatcher,
    Utterance,
    build_request,
    normalize_text,
)

__version__ = "0.1.0"
