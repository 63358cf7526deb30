// Token table view model. The bearer secret is only ever present in the
// create response and is shown exactly once; it never reaches this table.

import type { TokenRow } from './types.js';

export interface TokenView {
  tokenId: string;
  owner: string;
  issuedAt: Date;
  expiresAt: Date;
  revoked: boolean;
  status: 'active' | 'revoked' | 'expired';
}

export function tokenView(row: TokenRow, now: number = Date.now() / 1000): TokenView {
  const status = row.revoked
    ? 'revoked'
    : now >= row.expires_at
      ? 'expired'
      : 'active';
  return {
    tokenId: row.token_id,
    owner: row.owner,
    issuedAt: new Date(row.issued_at * 1000),
    expiresAt: new Date(row.expires_at * 1000),
    revoked: row.revoked,
    status,
  };
}
