#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldType {
    Str,
    Int,
    Float,
}

impl FieldType {
    pub fn is_numeric(self) -> bool {
        matches!(self, FieldType::Int | FieldType::Float)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: String,
    pub ty: FieldType,
}

/// Ordered, typed column list of a tuple stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TupleSchema {
    pub columns: Vec<Column>,
}

/// Netflow columns in input order.
pub const NETFLOW_COLUMNS: [(&str, FieldType); 14] = [
    ("TimeSeconds", FieldType::Float),
    ("ParseDate", FieldType::Str),
    ("IpLayerProtocol", FieldType::Str),
    ("SourceIp", FieldType::Str),
    ("DestIp", FieldType::Str),
    ("SourcePort", FieldType::Int),
    ("DestPort", FieldType::Int),
    ("DurationSeconds", FieldType::Float),
    ("SrcPayloadBytes", FieldType::Int),
    ("DestPayloadBytes", FieldType::Int),
    ("SrcTotalBytes", FieldType::Int),
    ("DestTotalBytes", FieldType::Int),
    ("SrcPacketCount", FieldType::Int),
    ("DestPacketCount", FieldType::Int),
];

impl TupleSchema {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = (S, FieldType)>) -> Self {
        Self {
            columns: columns
                .into_iter()
                .map(|(name, ty)| Column {
                    name: name.into(),
                    ty,
                })
                .collect(),
        }
    }

    /// Schema produced by the `VastStream` connection kind.
    pub fn netflow() -> Self {
        Self::new(NETFLOW_COLUMNS)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}
