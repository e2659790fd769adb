from prometheus_client import Counter, Histogram, Gauge, CollectorRegistry, generate_latest
from typing import Optional


class PrometheusMetrics:
    def __init__(self):
        self.registry = CollectorRegistry()

        self.operation_duration = Histogram(
            'toolkit_operation_duration_seconds',
            'Duration of instrumented toolkit operations in seconds',
            ['operation'],
            registry=self.registry
        )

        self.transform_duration = Histogram(
            'sht_transform_duration_seconds',
            'Spherical harmonic transform duration in seconds',
            ['transform', 'workers'],
            registry=self.registry
        )

        self.collective_exchanges = Counter(
            'collective_exchanges_total',
            'Total all-to-all exchanges performed by worker threads',
            ['stage'],
            registry=self.registry
        )

        self.solver_steps = Counter(
            'swe_solver_steps_total',
            'Total shallow-water solver time steps',
            ['scheme'],
            registry=self.registry
        )

        self.training_loss = Gauge(
            'training_loss',
            'Most recent epoch loss',
            ['stage', 'split'],
            registry=self.registry
        )

        self.epochs = Counter(
            'training_epochs_total',
            'Total completed training epochs',
            ['stage'],
            registry=self.registry
        )

        self.nan_aborts = Counter(
            'nan_aborts_total',
            'Runs aborted because a NaN was detected',
            ['where'],
            registry=self.registry
        )

    def record_operation(self, operation: str, duration: float):
        self.operation_duration.labels(operation=operation).observe(duration)

    def record_transform(self, transform: str, workers: str, duration: float):
        self.transform_duration.labels(transform=transform, workers=workers).observe(duration)

    def record_exchange(self, stage: str):
        self.collective_exchanges.labels(stage=stage).inc()

    def record_solver_step(self, scheme: str):
        self.solver_steps.labels(scheme=scheme).inc()

    def record_epoch(self, stage: str, train_loss: float, val_loss: Optional[float]):
        self.epochs.labels(stage=stage).inc()
        self.training_loss.labels(stage=stage, split="train").set(train_loss)
        if val_loss is not None:
            self.training_loss.labels(stage=stage, split="validation").set(val_loss)

    def record_nan_abort(self, where: str):
        self.nan_aborts.labels(where=where).inc()

    def get_metrics(self) -> str:
        return generate_latest(self.registry).decode('utf-8')

    def write_textfile(self, path: str):
        with open(path, "w", encoding="utf-8") as handle:
            handle.write(self.get_metrics())


prometheus_metrics = PrometheusMetrics()
