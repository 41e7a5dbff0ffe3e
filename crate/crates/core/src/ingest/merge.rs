// SPDX-License-Identifier: Apache-2.0

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{FacilityRecord, IngestError, ProviderDescriptor};

/// A facility assembled from every provider that lists it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedFacility {
    pub record: FacilityRecord,
    /// Field name → provider that supplied it.
    pub provenance: BTreeMap<String, String>,
    /// (provider_id, facility_id) of every contributing record, best provider first.
    pub sources: Vec<(String, String)>,
}

/// Merges records describing the same facility. Each field comes from the
/// best-ranked provider (lowest priority number) with a non-empty value.
pub fn merge_providers(
    records: &[FacilityRecord],
    descriptors: &[ProviderDescriptor],
) -> Result<MergedFacility, IngestError> {
    let priority_of = |provider: &str| {
        descriptors
            .iter()
            .find(|d| d.provider_id == provider)
            .map(|d| d.priority)
            .ok_or_else(|| IngestError::UnknownProvider(provider.to_owned()))
    };

    let mut ranked =
        records.iter().map(|r| Ok((priority_of(&r.provider_id)?, r))).collect::<Result<Vec<_>, IngestError>>()?;
    ranked.sort_by(|(pa, a), (pb, b)| {
        pa.cmp(pb).then_with(|| a.provider_id.cmp(&b.provider_id)).then_with(|| a.facility_id.cmp(&b.facility_id))
    });
    let (_, best) = *ranked.first().ok_or(IngestError::EmptyMerge)?;

    let key = best.key();
    for (_, r) in &ranked[1..] {
        if r.key() != key {
            return Err(IngestError::ConflictingIdentity(format!(
                "`{}` ({}) from {} vs `{}` ({}) from {}",
                best.name, best.city, best.provider_id, r.name, r.city, r.provider_id
            )));
        }
    }

    let field_names: BTreeSet<&String> = ranked.iter().flat_map(|(_, r)| r.raw_fields.keys()).collect();
    let mut record = FacilityRecord { raw_fields: BTreeMap::new(), cleaned_fields: BTreeMap::new(), ..best.clone() };
    let mut provenance = BTreeMap::new();
    for field in field_names {
        let Some((_, supplier)) = ranked.iter().find(|(_, r)| r.supplies(field)) else {
            continue;
        };
        record.raw_fields.insert(field.clone(), supplier.raw_fields[field].clone());
        if let Some(cleaned) = supplier.cleaned_fields.get(field) {
            record.cleaned_fields.insert(field.clone(), cleaned.clone());
        }
        provenance.insert(field.clone(), supplier.provider_id.clone());
    }

    Ok(MergedFacility {
        record,
        provenance,
        sources: ranked.iter().map(|(_, r)| (r.provider_id.clone(), r.facility_id.clone())).collect(),
    })
}
