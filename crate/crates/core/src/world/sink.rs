use crate::ingestion::{Collector, IngestError, WebhookHeaders};
use crate::simulator::{SinkResponse, WebhookDelivery, WebhookSink};
use crate::storage::{SeriesStore, StaticStore};
use crate::time::Timestamp;

/// In-process webhook endpoint: hands simulator deliveries to the collector.
pub(super) struct PlatformSink<'a> {
    pub collector: &'a mut Collector,
    pub statics: &'a mut dyn StaticStore,
    pub series: &'a mut dyn SeriesStore,
    pub up: bool,
}

impl WebhookSink for PlatformSink<'_> {
    fn deliver(&mut self, d: &WebhookDelivery, now: Timestamp) -> SinkResponse {
        if !self.up {
            return SinkResponse::Unreachable;
        }
        let headers = WebhookHeaders::from_pairs(d.headers());
        match self.collector.receive_webhook(self.statics, self.series, d.brand.as_str(), &headers, d.body.as_bytes(), now) {
            Ok(rec) => SinkResponse::Status(rec.http_status()),
            Err(IngestError::UnknownBrand(_)) => SinkResponse::Status(404),
            Err(IngestError::Storage(e)) => {
                tracing::error!(error = %e, "webhook storage failure");
                SinkResponse::Status(500)
            }
            Err(_) => SinkResponse::Status(400),
        }
    }
}
