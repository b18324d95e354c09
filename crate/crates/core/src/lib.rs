//! Decoding, visualization, relocation and replay of V2X intersection
//! traffic (SPaT, MAP and BSM), plus an Intersection Movement Assist
//! application that runs against replayed streams.
//!
//! The crate is organised by pipeline stage:
//!
//! - [`pcap`]: classic capture file reader/writer and payload extraction.
//! - [`j2735`]: UPER codec for the message subset, CSV and text export.
//! - [`geo`]: WGS-84 to local east/north/up conversion.
//! - [`scenario`]: BSM isolation, relocation, approach filtering, synthetic captures.
//! - [`replay`]: UDP re-broadcast with original timing and a matching listener.
//! - [`render`]: deterministic SVG frames of geometry, signal phase and road users.
//! - [`ima`]: time-to-intersection conflict warning.

pub mod geo;
pub mod ima;
pub mod j2735;
pub mod pcap;
pub mod render;
pub mod replay;
pub mod scenario;

pub use geo::{GeoPoint, LocalPoint};
pub use j2735::{BsmCore, Lane, LaneType, MapData, MessageFrame, MovementPhase, MovementState, NodeXY, Position3D, Role, SpatData};
pub use pcap::{ByteOrder, CaptureFile, CaptureRecord, Encapsulation, TimeResolution};
